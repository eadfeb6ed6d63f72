"""Command-line entry point: `levyflow run --config exp.toml` and `levyflow describe <experiment>`."""
import argparse
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
import sys
import tomllib
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from levyflow.core.config import settings
from levyflow.core.errors import ConfigError, LevyflowError, ParameterError
from levyflow.core.log import configure_logging
from levyflow.models.schemas import (
    DriftKind,
    ExperimentConfig,
    ExperimentParams,
    ExperimentTag,
    LevyFamily,
    LevyModel,
    VerificationReport,
)
from levyflow.services import kolmogorov, verifier
from levyflow.services.levy_model import stable_symbol_constant
from levyflow.services.path_sampler import sample_path
from levyflow.services.pathwise_solver import solve_frozen
from levyflow.services.shards import ExecutionContext, ShardPool
from levyflow.storage import artifacts

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


@dataclass
class RunOutcome:
    reports: List[VerificationReport]
    files: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)


# Configuration loading
def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{key}: {item['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_config_text(text: str, suffix: str = ".toml") -> dict:
    """Parse TOML (default) or JSON text; syntax errors name the line."""
    if suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc


def load_config(path: Path, seed: Optional[int] = None, out_dir: Optional[Path] = None,
                fmt: Optional[str] = None) -> ExperimentConfig:
    """Read and validate a config file; command-line overrides win over file values."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = parse_config_text(text, Path(path).suffix.lower())
    if seed is not None:
        raw.setdefault("seeds", {})["master"] = seed
    if out_dir is not None:
        raw.setdefault("output", {})["dir"] = str(out_dir)
    if fmt is not None:
        raw.setdefault("output", {})["format"] = fmt
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc
    _warn_outside_regime(config)
    return config


def _noise_index(model: LevyModel) -> float:
    if model.alpha is not None:
        return model.alpha
    return 2.0 if model.family == LevyFamily.BROWNIAN else 0.0


def _warn_outside_regime(config: ExperimentConfig) -> None:
    alpha = _noise_index(config.model)
    beta = config.drift.beta
    if config.drift.kind != DriftKind.ZERO and beta <= 1.0 - alpha / 2.0:
        logger.warning("beta=%.3f <= 1 - alpha/2 = %.3f: outside the regime where uniqueness is guaranteed",
                       beta, 1.0 - alpha / 2.0)


# Experiment runners
def _finish(report: VerificationReport, config: ExperimentConfig, pool: Optional[ShardPool] = None,
            experiment: Optional[str] = None) -> VerificationReport:
    """Attach the normalized config and the shard seeds."""
    update = {"config_snapshot": config.snapshot()}
    if pool is not None:
        update["seeds"] = pool.seeds
    if experiment is not None:
        update["experiment"] = experiment
    return report.model_copy(update=update)


def _pool(config: ExperimentConfig, context: ExecutionContext) -> ShardPool:
    return ShardPool(config.seeds.master, context.shards, context.threads)


def run_sample(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    pool = _pool(config, context)
    files: List[Path] = []
    rows = []
    for number, (shard, index) in enumerate(pool.path_keys(params.n_paths)):
        path = sample_path(config.model, context.grid, shard, index, context.sampler_method, context.epsilon)
        files.append(artifacts.write_path_csv(path, out_dir / f"path_{number:04d}.csv"))
        if config.output.archive_paths:
            files.append(artifacts.write_path_archive(path, out_dir / f"path_{number:04d}.lvyp"))
        rows.append({
            "path": number,
            "shard_seed": shard,
            "path_index": index,
            "terminal_norm": float(np.linalg.norm(path.values[-1])),
            "sup_norm": float(np.max(np.linalg.norm(path.values, axis=1))),
            "big_jumps": len(path.jump_times),
        })
    report = VerificationReport(
        experiment=ExperimentTag.SAMPLE.value,
        n_paths=params.n_paths,
        passed=True,
        statistics={
            "mean_terminal_norm": float(np.mean([row["terminal_norm"] for row in rows])),
            "mean_big_jumps": float(np.mean([row["big_jumps"] for row in rows])),
        },
        rows=rows,
    )
    return RunOutcome([_finish(report, config, pool)], files)


def run_solve(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    pool = _pool(config, context)
    files: List[Path] = []
    rows = []
    failures = 0
    for number, (shard, index) in enumerate(pool.path_keys(params.n_paths)):
        path = sample_path(config.model, context.grid, shard, index, context.sampler_method, context.epsilon)
        try:
            curve = solve_frozen(config.drift, path, params.s, params.x, context.method, context.tol,
                                 context.max_iter)
        except LevyflowError as exc:
            failures += 1
            logger.warning("path %d: %s", number, exc)
            rows.append({"path": number, "residual": None, "iterations": None, "converged": False})
            continue
        files.append(artifacts.write_curve_csv(curve, out_dir / f"curve_{number:04d}.csv"))
        rows.append({"path": number, "residual": curve.residual, "iterations": curve.iterations,
                     "converged": True})
    residuals = [row["residual"] for row in rows if row["residual"] is not None]
    report = VerificationReport(
        experiment=ExperimentTag.SOLVE.value,
        n_paths=params.n_paths,
        residual_max=max(residuals) if residuals else None,
        passed=failures / params.n_paths <= config.thresholds.max_failure_fraction,
        failures=failures,
        rows=rows,
    )
    return RunOutcome([_finish(report, config, pool)], files)


def run_verify_lp(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.lp_lipschitz(config.drift, config.model, params.p,
                                   verifier.default_pairs(params.x, params.pair_distances),
                                   params.s_values, params.n_paths, config.seeds.master, context)
    return RunOutcome([_finish(report, config)])


def run_verify_holder(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.holder_in_x(config.drift, config.model, params.s, params.box_radius, params.n_points,
                                  params.n_paths, params.n_grr, config.seeds.master, context)
    return RunOutcome([_finish(report, config)])


def run_verify_uniqueness(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.uniqueness_multistart(config.drift, config.model, params.s, params.x, params.n_starts,
                                            params.perturbation_scale, params.n_paths, config.seeds.master,
                                            context)
    reports = [_finish(report, config)]
    peano_start = config.drift.kind in (DriftKind.SQRT_ABS, DriftKind.HOLDER_POWER) and not any(params.x)
    if peano_start:
        control = verifier.uniqueness_multistart(config.drift, config.model, params.s, params.x, params.n_starts,
                                                 params.perturbation_scale, 1, config.seeds.master, context,
                                                 noise_off=True)
        reports.append(_finish(control, config, experiment="verify-uniqueness-control"))
    return RunOutcome(reports)


def run_verify_flow(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.flow_identity(config.drift, config.model, params.n_triples, params.n_paths, params.n_s_nodes,
                                    config.seeds.master, context, params.box_radius)
    reports = [_finish(report, config)]
    t = params.t if params.t is not None else context.grid.t_end
    shard = ShardPool(config.seeds.master, context.shards).seeds[0]
    path = sample_path(config.model, context.grid, shard, 0, context.sampler_method, context.epsilon)
    constancy = verifier.constancy_of_aux(config.drift, path, params.s, t, params.x, params.n_s_nodes, context)
    reports.append(_finish(constancy, config))
    return RunOutcome(reports)


def _cadlag_box(params: ExperimentParams) -> np.ndarray:
    x = np.asarray(params.x, dtype=float)
    offsets = np.linspace(-params.box_radius, params.box_radius, params.x_box_points)
    return x[None, :] + offsets[:, None]


def run_verify_cadlag(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.cadlag_in_s(config.drift, config.model, params.s, _cadlag_box(params), params.n_paths,
                                  config.seeds.master, context, params.k_max)
    return RunOutcome([_finish(report, config)])


def run_tanaka_grid(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    report = verifier.tanaka_regime(params.alpha_list, params.beta_list, params.n_paths, config.seeds.master,
                                    context, params.n_starts, params.perturbation_scale)
    return RunOutcome([_finish(report, config)])


def symbol_parameters(model: LevyModel) -> tuple:
    """(α, c) with ψ(h) = c|h|^α for the one-dimensional symmetric stable and Brownian models."""
    if model.dim != 1:
        raise ParameterError("density experiments need a one-dimensional model")
    if model.family == LevyFamily.ISOTROPIC_STABLE:
        return model.alpha, model.scale * stable_symbol_constant(1, model.alpha)
    if model.family == LevyFamily.BROWNIAN:
        return 2.0, 0.5 * float(model.q[0, 0])
    raise ParameterError(f"density experiments support isotropic_stable and brownian, got {model.family.value}")


def run_kolmogorov_gradient(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    thresholds = config.thresholds
    alpha, scale = symbol_parameters(config.model)
    slope, details = kolmogorov.gradient_estimate_check(alpha, params.t_list, params.probes, scale)
    target = -1.0 / alpha
    passed = target - thresholds.gradient_slack_low <= slope <= target + thresholds.gradient_slack_high
    rows = []
    for probe, data in details["probes"].items():
        for t, norm in zip(sorted(params.t_list), data["norms"]):
            rows.append({"probe": probe, "t": float(t), "gradient_sup": norm, "slope": data["slope"]})
    table = kolmogorov.stable_density_1d(alpha, max(params.t_list), scale=scale)
    files = [artifacts.write_density_csv(table, out_dir / "density.csv")]
    report = VerificationReport(
        experiment=ExperimentTag.KOLMOGOROV_GRADIENT.value,
        fitted_exponent=slope,
        passed=passed,
        statistics={
            "target_slope": target,
            "binding_bound_ratio": details["probes"][details["binding_probe"]]["bound_ratio"],
            "total_mass": table.total_mass(),
        },
        rows=rows,
        notes=[f"binding probe: {details['binding_probe']}"],
    )
    return RunOutcome([_finish(report, config)], files)


def run_kolmogorov_lambda0(config: ExperimentConfig, context: ExecutionContext, out_dir: Path) -> RunOutcome:
    params = config.params
    thresholds = config.thresholds
    search = kolmogorov.lambda0_search(config.drift, config.model, config.drift.beta, params.x_probes,
                                       params.lambda_grid, params.n_paths, config.seeds.master, context,
                                       thresholds.lambda0_threshold, params.h_fd, params.tail_tol,
                                       params.resolvent_steps)
    slope_ok = search.slope is None or search.slope <= search.target_slope + thresholds.lambda0_slope_slack
    files = [
        artifacts.write_json_record(search.record(), out_dir / "lambda0.json"),
        artifacts.write_resolvent_csv(search.estimates, out_dir / "resolvent.csv"),
    ]
    report = VerificationReport(
        experiment=ExperimentTag.KOLMOGOROV_LAMBDA0.value,
        n_paths=params.n_paths,
        seeds=ShardPool(config.seeds.master, context.shards).seeds,
        fitted_exponent=search.slope,
        passed=search.found and slope_ok,
        statistics={
            "lambda0": search.lambda0,
            "target_slope": search.target_slope,
            "du_sup_at_largest_lambda": search.du_sup_by_lambda[-1],
        },
        rows=[{"lambda": lam, "du_sup": value, "du_sigma": sigma}
              for lam, value, sigma in zip(search.grid, search.du_sup_by_lambda, search.du_sigma_by_lambda)],
        notes=[] if search.found else ["no grid lambda reached the threshold"],
    )
    return RunOutcome([_finish(report, config)], files)


Runner = Callable[[ExperimentConfig, ExecutionContext, Path], RunOutcome]

RUNNERS: Dict[ExperimentTag, Runner] = {
    ExperimentTag.SAMPLE: run_sample,
    ExperimentTag.SOLVE: run_solve,
    ExperimentTag.VERIFY_LP: run_verify_lp,
    ExperimentTag.VERIFY_HOLDER: run_verify_holder,
    ExperimentTag.VERIFY_UNIQUENESS: run_verify_uniqueness,
    ExperimentTag.VERIFY_FLOW: run_verify_flow,
    ExperimentTag.VERIFY_CADLAG: run_verify_cadlag,
    ExperimentTag.TANAKA_GRID: run_tanaka_grid,
    ExperimentTag.KOLMOGOROV_GRADIENT: run_kolmogorov_gradient,
    ExperimentTag.KOLMOGOROV_LAMBDA0: run_kolmogorov_lambda0,
}


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> RunOutcome:
    """Run one configured experiment and write its reports and artifacts."""
    context = ExecutionContext.from_config(config, threads)
    out_dir = artifacts.ensure_dir(config.output.dir)
    logger.info("running %s (model %s, seed %d, %d threads)", config.experiment.value, config.model.model_id,
                config.seeds.master, context.threads)
    outcome = RUNNERS[config.experiment](config, context, out_dir)
    for report in outcome.reports:
        outcome.files.extend(artifacts.write_report(report, out_dir, config.output.format))
        logger.info("%s: %s", report.experiment, "pass" if report.passed else "FAIL")
    return outcome


# describe
DESCRIPTIONS: Dict[ExperimentTag, tuple] = {
    ExperimentTag.SAMPLE: (
        "Sample Lévy paths on the configured grid and export them as CSV (and LVYP archives).",
        "Lévy-Itô decomposition L = small jumps + compensated middle jumps + big jumps; exact stable increments.",
        ["n_paths"],
    ),
    ExperimentTag.SOLVE: (
        "Solve the frozen-path equation Y_t = x + ∫_s^t b(r, Y_r + L_r - L_s) dr per path and export the curves.",
        "Integral equation for Y = X - (L - L_s) driven by one fixed noise realization.",
        ["n_paths", "s", "x"],
    ),
    ExperimentTag.VERIFY_LP: (
        "Lp-Lipschitz dependence on the starting point: E sup_t |Y^{s,x} - Y^{s,y}|^p / |x - y|^p stays bounded.",
        "Moment bound E sup |X^{s,x}_t - X^{s,y}_t|^p <= C |x - y|^p, uniform in s.",
        ["n_paths", "p", "x", "pair_distances", "s_values"],
    ),
    ExperimentTag.VERIFY_HOLDER: (
        "Hölder continuity of x -> X^{s,x} on a box, estimated with a Garsia-Rodemich-Rumsey statistic.",
        "Hölder field estimate: every exponent below 1 - d/p is attained.",
        ["n_paths", "s", "box_radius", "n_points", "n_grr"],
    ),
    ExperimentTag.VERIFY_UNIQUENESS: (
        "Path-by-path uniqueness: Picard runs from perturbed initial curves collapse to one solution per path. "
        "From x = 0 with a Peano drift, a noise-off control must branch instead.",
        "For almost every path the integral equation f(t) = x + ∫_s^t b(r, f(r) + L_r) dr has exactly one solution.",
        ["n_paths", "s", "x", "n_starts", "perturbation_scale"],
    ),
    ExperimentTag.VERIFY_FLOW: (
        "Flow identity φ(s, t, x) = φ(r, t, φ(s, r, x)) on random triples s < r < t, with refinement check, "
        "plus constancy of s -> φ(s, t, g(s)) along a solution g.",
        "Flow property of the solution map on one fixed path, for every start simultaneously.",
        ["n_paths", "n_triples", "n_s_nodes", "box_radius", "s", "t", "x"],
    ),
    ExperimentTag.VERIFY_CADLAG: (
        "Right-continuity in the start time: sup_t |X^{s+2^-k, x}_t - X^{s, x}_t| -> 0 as k grows.",
        "The map s -> X^{s,x} is càdlàg uniformly on compacts in x.",
        ["n_paths", "s", "x", "box_radius", "x_box_points", "k_max"],
    ),
    ExperimentTag.TANAKA_GRID: (
        "Grid over (α, β) classifying the uniqueness regime and measuring multistart spread per cell. "
        "Caveat: in d = 1 with α + β < 1 uniqueness can fail, so spread there is reported, not asserted.",
        "Regime boundary β > 1 - α/2; Tanaka-type counterexamples when α + β < 1.",
        ["n_paths", "alpha_list", "beta_list", "n_starts", "perturbation_scale"],
    ),
    ExperimentTag.KOLMOGOROV_GRADIENT: (
        "Gradient estimate sup_x |D P_t f(x)| <= c t^{-1/α} sup_x |f(x)| from FFT stable densities.",
        "Semigroup gradient bound for the symmetric stable law; slope of log-gradient vs log t is -1/α.",
        ["t_list", "probes"],
    ),
    ExperimentTag.KOLMOGOROV_LAMBDA0: (
        "Monte Carlo resolvent u_λ = E ∫ e^{-λt} b_k(X_t) dt with common-random-number gradients; "
        "finds the smallest λ with sup ‖Du_λ‖ < 1/3.",
        "Resolvent equation λu - ℒu - b·Du = f; gradient decay λ^{-(α+β-1)/(α+β)}.",
        ["n_paths", "lambda_grid", "x_probes", "h_fd", "tail_tol", "resolvent_steps"],
    ),
}

ANCHORS: Dict[ExperimentTag, str] = {
    ExperimentTag.SAMPLE: "Lévy-Itô decomposition; Chambers-Mallows-Stuck representation of stable laws.",
    ExperimentTag.SOLVE: "Frozen-noise substitution Y = X - (L - L_s); Picard iteration on the integral equation.",
    ExperimentTag.VERIFY_LP: "Lp moment bound for flow differences via the Kolmogorov equation and Gronwall.",
    ExperimentTag.VERIFY_HOLDER: "Kolmogorov-Chentsov continuity through the Garsia-Rodemich-Rumsey inequality.",
    ExperimentTag.VERIFY_UNIQUENESS: "Path-by-path uniqueness via the Itô-Tanaka trick; Peano drift as control.",
    ExperimentTag.VERIFY_FLOW: "Flow identity φ(s, t, x) = φ(r, t, φ(s, r, x)) of the stochastic flow.",
    ExperimentTag.VERIFY_CADLAG: "Right-continuity of the start-time map s -> X^{s,x} in the Skorokhod sense.",
    ExperimentTag.TANAKA_GRID: "Regime condition β > 1 - α/2 and Tanaka's counterexample for α + β < 1.",
    ExperimentTag.KOLMOGOROV_GRADIENT: "Gradient estimate for the stable semigroup, |D P_t f| <= c t^{-1/α} |f|.",
    ExperimentTag.KOLMOGOROV_LAMBDA0: "Schauder estimate for the resolvent equation λu - ℒu - b·Du = b.",
}


def describe(tag: str) -> str:
    """Purpose, mathematical anchor and config keys for an experiment tag."""
    valid = [item.value for item in ExperimentTag]
    try:
        experiment = ExperimentTag(tag)
    except ValueError:
        raise ConfigError(f"unknown experiment '{tag}'; valid experiments: {', '.join(valid)}") from None
    purpose, prop, keys = DESCRIPTIONS[experiment]
    defaults = ExperimentParams()
    lines = [
        f"{experiment.value}",
        "",
        f"Purpose:  {purpose}",
        f"Property: {prop}",
        f"Anchor:   {ANCHORS[experiment]}",
        "",
        "Config schema (TOML):",
        f'  experiment = "{experiment.value}"',
        "  [model]     family, dim, alpha, scale, m, trunc_r, q_diag | q_matrix",
        "  [drift]     kind, dim, beta, holder_seminorm, sup_norm, matrix, center, radius, height",
        "  [grid]      t_end, n_steps",
        "  [solver]    method (picard | euler), tol, max_iter",
        "  [sampler]   method (exact | levy_ito), epsilon",
        "  [seeds]     master, shards",
        "  [thresholds] see VerificationReport pass rules",
        "  [output]    dir, format (json | csv | both), archive_paths",
        "  [params]",
    ]
    for key in keys:
        lines.append(f"    {key} = {json.dumps(getattr(defaults, key))}")
    return "\n".join(lines)


# CLI plumbing
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.app_name,
                                     description="Lévy-driven SDE simulation and verification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("--log-level", default=None, help=f"logging level (default: {settings.log_level})")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", type=Path, required=True, help="TOML or JSON experiment config")
    run.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    run.add_argument("--seed", type=int, default=None, help="master seed (overrides seeds.master)")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: LEVYFLOW_THREADS or 1)")
    run.add_argument("--format", choices=["json", "csv", "both"], default=None,
                     help="report format (overrides output.format)")

    show = commands.add_parser("describe", help="describe an experiment and its config keys")
    show.add_argument("experiment", help="experiment tag")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "describe":
            print(describe(args.experiment))
            return EXIT_PASS
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        config = load_config(args.config, args.seed, args.out, args.format)
        outcome = run_experiment(config, args.threads)
    except LevyflowError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        logger.exception("experiment failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
