"""Semigroup and resolvent computations for the Kolmogorov equation λu - ℒu - b·Du = f.

Densities of the one-dimensional symmetric stable law (symbol scale·|h|^α) come from a
discrete Fourier inversion. The periodic images that the FFT folds back onto the grid
are removed with the stable tail series

    p(x) ~ (1/π) Σ_j (-1)^{j+1} Γ(jα+1)/j! · sin(jπα/2) · c^j |x|^{-jα-1},  c = scale·t,

summed over images with the Hurwitz zeta function.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal, special

from levyflow.core.config import settings
from levyflow.core.errors import HorizonError, ParameterError, ResolutionError
from levyflow.models.arrays import DensityTable, ResolventEstimate, TimeGrid
from levyflow.models.schemas import DriftSpec, LevyModel, ProbeFunction, ProbeKind
from levyflow.services.path_sampler import sample_paths
from levyflow.services.pathwise_solver import solve_frozen_batch
from levyflow.services.shards import ExecutionContext, ShardPool

logger = logging.getLogger(__name__)

DEFAULT_HALF_WIDTH = 20.0
SERIES_TERMS = 24
SERIES_FLOOR = 1e-18
ALIASING_TOLERANCE = 1e-6
NYQUIST_TOLERANCE = 1e-12
PROBE_RESOLUTION = 50
PROBE_SUPPORT = 3.0
PROBE_FREQUENCY = 16.0


def _tail_coefficients(alpha: float, c: float, nearest: float) -> Tuple[List[Tuple[float, float]], float]:
    """Terms (A_j, s_j = jα + 1) of the tail series worth keeping at distance `nearest`,
    plus the size there of the first term left out."""
    terms: List[Tuple[float, float]] = []
    previous = math.inf
    for j in range(1, SERIES_TERMS + 1):
        power = j * alpha + 1.0
        magnitude = math.exp(special.gammaln(power) - special.gammaln(j + 1.0) + j * math.log(c)
                             - power * math.log(nearest)) / math.pi
        if magnitude > previous:
            # asymptotic series started to grow
            return terms, magnitude
        if magnitude < SERIES_FLOOR:
            return terms, 0.0
        weight = math.sin(j * math.pi * alpha / 2.0)
        coefficient = (-1.0) ** (j + 1) * math.exp(special.gammaln(power) - special.gammaln(j + 1.0)) \
            * weight * c ** j / math.pi
        if coefficient != 0.0:
            terms.append((coefficient, power))
        previous = magnitude
    return terms, previous


def _image_sum(power: float, u: np.ndarray, period: float, odd: bool = False) -> np.ndarray:
    """Σ_{n≠0} |x + nP|^{-power} (or the signed sum when odd) for x = u·P, |u| < 1."""
    right = special.zeta(power, 1.0 + u)
    left = special.zeta(power, 1.0 - u)
    return period ** -power * (right - left if odd else right + left)


def default_density_grid(alpha: float, t: float, scale: float = 1.0, n_points: Optional[int] = None) -> np.ndarray:
    """Grid on [-w, w) with w = 20·max(1, (scale·t)^{1/α}).

    The width never drops below 20; only large times widen it.
    """
    n_points = n_points or settings.density_points
    half_width = DEFAULT_HALF_WIDTH * max(1.0, (scale * t) ** (1.0 / alpha))
    return -half_width + np.arange(n_points) * (2.0 * half_width / n_points)


def stable_density_1d(alpha: float, t: float, x_grid: Optional[np.ndarray] = None, scale: float = 1.0) -> DensityTable:
    """Density and spectral derivative of the symmetric stable law with E exp(ihL_t) = exp(-t·scale·|h|^α).

    α = 2 is the Gaussian N(0, 2·scale·t); α = 1 with scale = 1 is the Cauchy law with parameter t.
    """
    if not 0.0 < alpha <= 2.0:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
    if t <= 0 or scale <= 0:
        raise ParameterError(f"t and scale must be positive, got t={t}, scale={scale}")
    x = default_density_grid(alpha, t, scale) if x_grid is None else np.asarray(x_grid, dtype=float)
    n = len(x)
    dx = float(x[1] - x[0])
    if n < 4 or not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0.0):
        raise ParameterError("x_grid must be uniform with at least four points")
    period = n * dx
    x0 = float(x[0])
    if not x0 < 0.0 < x0 + period:
        raise ParameterError("x_grid must straddle the origin")

    c = scale * t
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    nyquist = math.pi / dx
    if math.exp(-c * nyquist ** alpha) > NYQUIST_TOLERANCE:
        raise ResolutionError(f"grid spacing {dx:.3e} too coarse to resolve the law at t={t}",
                              suggested_width=float(period / 2.0))

    transform = np.exp(-c * np.abs(k) ** alpha) * np.exp(-1j * k * x0)
    density = np.real(np.fft.fft(transform)) / period
    spectral = -1j * k
    if n % 2 == 0:
        spectral[n // 2] = 0.0
    derivative = np.real(np.fft.fft(spectral * transform)) / period

    tail_mass = 0.0
    if alpha < 2.0:
        left, right = -x0, x0 + period
        nearest = min(left, right)
        terms, remainder = _tail_coefficients(alpha, c, nearest)
        if remainder > ALIASING_TOLERANCE:
            raise ResolutionError(
                f"tail series does not settle at distance {nearest:.3g}; widen the grid",
                suggested_width=float(2.0 * max(left, right)),
            )
        u = x / period
        for coefficient, power in terms:
            density -= coefficient * _image_sum(power, u, period)
            derivative -= coefficient * (-power) * _image_sum(power + 1.0, u, period, odd=True)
            tail_mass += coefficient * (left ** (1.0 - power) + right ** (1.0 - power)) / (power - 1.0)
    return DensityTable(alpha=alpha, t=t, x_grid=x, density=density, derivative=derivative, scale=scale,
                        tail_mass=float(tail_mass))


def _probe_values(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "step":
        return np.sign(x)
    if kind == "bump":
        return np.clip(1.0 - x ** 2, 0.0, None)
    if kind == "oscillatory":
        return np.cos(PROBE_FREQUENCY * x)
    raise ParameterError(f"unknown probe '{kind}', expected step, bump or oscillatory")


def _probe_grid(alpha: float, t: float, scale: float) -> np.ndarray:
    sigma = (scale * t) ** (1.0 / alpha)
    dx = sigma / PROBE_RESOLUTION
    half_width = PROBE_SUPPORT + DEFAULT_HALF_WIDTH * sigma
    half_points = int(math.ceil(half_width / dx))
    return (np.arange(2 * half_points + 1) - half_points) * dx


def gradient_norm(alpha: float, t: float, probe: str, scale: float = 1.0) -> float:
    """sup_{|x|<=2} |DP_t f(x)| for a probe with ‖f‖₀ = 1, by convolving the density derivative."""
    x = _probe_grid(alpha, t, scale)
    table = stable_density_1d(alpha, t, x, scale)
    convolved = signal.fftconvolve(table.derivative, _probe_values(probe, x), mode="same") * table.dx
    window = np.abs(x) <= 2.0
    return float(np.max(np.abs(convolved[window])))


def gradient_estimate_check(alpha: float, t_list: Sequence[float], f_probe_set: Sequence[str] = ("step", "bump", "oscillatory"),
                            scale: float = 1.0) -> Tuple[float, Dict[str, Dict]]:
    """Fitted slope of log sup|DP_t f| against log t for the binding probe.

    The binding probe is the one coming closest to the bound, i.e. with the largest
    max_t sup|DP_t f|·t^{1/α}; the slopes of all probes are returned alongside.
    """
    t_values = np.asarray(sorted(t_list), dtype=float)
    if len(t_values) < 2 or np.any(t_values <= 0) or np.any(t_values > 1):
        raise ParameterError("t_list needs at least two times in (0, 1]")
    details: Dict[str, Dict] = {}
    for probe in f_probe_set:
        norms = np.array([gradient_norm(alpha, t, probe, scale) for t in t_values])
        norms = np.maximum(norms, np.finfo(float).tiny)
        slope, _ = np.polyfit(np.log(t_values), np.log(norms), 1)
        details[probe] = {
            "slope": float(slope),
            "norms": norms.tolist(),
            "bound_ratio": float(np.max(norms * t_values ** (1.0 / alpha))),
        }
    binding = max(details, key=lambda name: details[name]["bound_ratio"])
    logger.info("gradient slope for alpha=%.2f: %.4f (probe %s)", alpha, details[binding]["slope"], binding)
    return details[binding]["slope"], {"binding_probe": binding, "probes": details}


def default_horizon(lam: float, sup_norm: float, tail_tol: float) -> float:
    """max(12/λ, log(‖f‖₀/(λ·tail_tol))/λ)."""
    horizon = 12.0 / lam
    if sup_norm > 0:
        horizon = max(horizon, math.log(sup_norm / (lam * tail_tol)) / lam)
    return horizon


def exponential_weights(nodes: np.ndarray, lam: float) -> np.ndarray:
    """∫_{n_k}^{n_{k+1}} e^{-λt} dt for every cell."""
    decay = np.exp(-lam * nodes)
    return (decay[:-1] - decay[1:]) / lam


def resolvent_mc(drift: DriftSpec, f: ProbeFunction, lam: float, x_probes: Sequence[float], model: LevyModel,
                 horizon: Optional[float] = None, n_paths: int = 1000, seed: int = 0,
                 context: Optional[ExecutionContext] = None, h_fd: Optional[float] = None,
                 tail_tol: Optional[float] = None, n_steps: int = 256, method: str = "euler") -> ResolventEstimate:
    """u(x) ≈ E ∫_0^H e^{-λt} f(X_t^x) dt with left-node exponential weights.

    Du comes from central differences at x ± h_fd on the same paths.
    """
    context = context or ExecutionContext()
    if lam < 1:
        raise ParameterError(f"lambda must be at least 1, got {lam}")
    h_fd = settings.h_fd if h_fd is None else h_fd
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    sup_norm = f.sup_norm
    if horizon is None:
        horizon = default_horizon(lam, sup_norm, tail_tol)
    elif sup_norm > 0 and math.exp(-lam * horizon) * sup_norm / lam >= tail_tol:
        raise HorizonError(f"horizon {horizon} leaves a tail above {tail_tol} for lambda={lam}")

    d = model.dim
    probes = np.asarray(x_probes, dtype=float).reshape(-1, d)
    unit = np.zeros(d)
    unit[0] = h_fd
    starts = np.concatenate([probes - unit, probes, probes + unit])
    n_probe = len(probes)
    grid = TimeGrid.uniform(horizon, n_steps)

    def worker(shard_seed: int, count: int) -> np.ndarray:
        if count == 0:
            return np.zeros((0, len(starts)))
        paths = sample_paths(model, grid, shard_seed, count, context.sampler_method, context.epsilon)
        batch = solve_frozen_batch(drift, paths, 0.0, starts, method, context.tol, context.max_iter)
        weights = exponential_weights(batch.nodes, lam)
        values = f.evaluate(batch.x_values[:, :, :-1, :])
        return np.einsum("psm,m->ps", values, weights)

    pool = ShardPool(seed, context.shards, context.threads)
    samples = np.concatenate(pool.map_shards(worker, n_paths))
    minus, centre, plus = samples[:, :n_probe], samples[:, n_probe:2 * n_probe], samples[:, 2 * n_probe:]
    differences = (plus - minus) / (2.0 * h_fd)
    root = math.sqrt(max(n_paths, 1))
    u_values = centre.mean(axis=0)
    du_values = differences.mean(axis=0)
    return ResolventEstimate(
        lam=float(lam),
        x_probe=probes,
        u_values=u_values,
        du_values=du_values,
        du_sup=float(np.max(np.abs(du_values))),
        n_paths=n_paths,
        seed=seed,
        horizon=horizon,
        u_sigma=centre.std(axis=0, ddof=1) / root if n_paths > 1 else np.zeros(n_probe),
        du_sigma=differences.std(axis=0, ddof=1) / root if n_paths > 1 else np.zeros(n_probe),
    )


def drift_free_resolvent(lam: float, k: float, x: np.ndarray, exponent_value: float, nodes: np.ndarray) -> np.ndarray:
    """Expected left-node estimate for b = 0, f = cos(kx): Σ w_i e^{-t_i ψ(k)} cos(kx)."""
    weights = exponential_weights(nodes, lam)
    return float(np.sum(weights * np.exp(-nodes[:-1] * exponent_value))) * np.cos(k * np.asarray(x))


@dataclass(frozen=True)
class Lambda0Search:
    lambda0: Optional[float]
    slope: Optional[float]
    grid: List[float]
    du_sup_by_lambda: List[float]
    du_sigma_by_lambda: List[float] = field(default_factory=list)
    target_slope: Optional[float] = None
    found: bool = False
    # binding component's estimate per grid λ
    estimates: List[ResolventEstimate] = field(default_factory=list)

    def record(self) -> Dict:
        return {
            "lambda0": self.lambda0,
            "slope": self.slope,
            "grid": self.grid,
            "du_sup_by_lambda": self.du_sup_by_lambda,
        }


def lambda0_search(drift: DriftSpec, model: LevyModel, beta: float, probes: Sequence[float],
                   lambda_grid: Sequence[float], n_paths: int = 1000, seed: int = 0,
                   context: Optional[ExecutionContext] = None, threshold: float = 1.0 / 3.0,
                   h_fd: Optional[float] = None, tail_tol: Optional[float] = None,
                   n_steps: int = 256) -> Lambda0Search:
    """Smallest grid λ with sup_k ‖Du_λ^k‖ < threshold for the components f = b_k."""
    grid = sorted(float(lam) for lam in lambda_grid)
    if not grid or grid[0] < 1:
        raise ParameterError("lambda_grid must be non-empty with minimum >= 1")
    alpha = model.alpha if model.alpha is not None else 2.0
    if beta <= 1.0 - alpha / 2.0:
        logger.warning("beta=%.3f is outside the regime beta > 1 - alpha/2 = %.3f", beta, 1.0 - alpha / 2.0)

    du_sup, du_sigma = [], []
    binding: List[ResolventEstimate] = []
    for lam in grid:
        best: Optional[ResolventEstimate] = None
        for component in range(drift.dim):
            f = ProbeFunction(kind=ProbeKind.DRIFT_COMPONENT, component=component, drift=drift)
            estimate = resolvent_mc(drift, f, lam, probes, model, None, n_paths, seed, context, h_fd, tail_tol,
                                    n_steps)
            if best is None or estimate.du_sup > best.du_sup:
                best = estimate
        sigma = float(best.du_sigma[int(np.argmax(np.abs(best.du_values)))]) if len(best.du_sigma) else 0.0
        binding.append(best)
        du_sup.append(best.du_sup)
        du_sigma.append(sigma)
        logger.info("lambda=%g du_sup=%.4e", lam, best.du_sup)

    below = [lam for lam, value in zip(grid, du_sup) if value < threshold]
    values = np.array(du_sup)
    slope = None
    if np.all(values > 0) and len(grid) >= 2:
        fitted, _ = np.polyfit(np.log(grid), np.log(values), 1)
        slope = float(fitted)
    return Lambda0Search(
        lambda0=below[0] if below else None,
        slope=slope,
        grid=grid,
        du_sup_by_lambda=du_sup,
        du_sigma_by_lambda=du_sigma,
        target_slope=-(alpha + beta - 1.0) / (alpha + beta),
        found=bool(below),
        estimates=binding,
    )
