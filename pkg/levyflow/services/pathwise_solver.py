"""Frozen-path solver for Y_t = x + ∫_s^t b(r, Y_r + L_r - L_s) dr.

The path is frozen, so the equation is a deterministic Volterra equation. The solver
works on a merged node set (grid nodes, s, big-jump times, requested evaluation
times) on which L is constant over every cell [n_k, n_{k+1}).

Picard iterates the composite trapezoid map; Euler marches the left-point rule.
The full solution is X_t = Y_t + L_t - L_s.
"""
import logging
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from levyflow.core.config import settings
from levyflow.core.errors import ConvergenceError, DomainError, NumericError, ParameterError
from levyflow.models.arrays import BatchSolution, LevyPath, SolutionCurve, TimeGrid
from levyflow.models.schemas import DriftSpec
from levyflow.services.path_sampler import jump_resolved_values

logger = logging.getLogger(__name__)

METHODS = ("picard", "euler")
InitialCurve = Callable[[np.ndarray], np.ndarray]


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite values in {what}")


def solver_nodes(path: LevyPath, s: float, extra: Iterable[float] = (), paths: Sequence[LevyPath] = ()) -> np.ndarray:
    """Grid nodes merged with s, extra evaluation times and big-jump times after s."""
    parts = [path.grid.times, np.array([s], dtype=float), np.asarray(list(extra), dtype=float)]
    for member in paths or (path,):
        if member.exact_jump_times and len(member.jump_times):
            parts.append(member.jump_times[member.jump_times > s])
    nodes = np.unique(np.concatenate(parts))
    if nodes[0] < 0.0 or nodes[-1] > path.grid.t_end:
        raise DomainError(f"evaluation times must lie in [0, {path.grid.t_end}]")
    return nodes


def noise_at_nodes(path: LevyPath, nodes: np.ndarray, s: float) -> np.ndarray:
    """L_{n_k} - L_s for nodes n_k >= s and 0 before s, shape (m, d)."""
    values = jump_resolved_values(path, nodes)
    noise = values - jump_resolved_values(path, [s])[0]
    noise[nodes < s] = 0.0
    return noise


def _sup_defect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sup over nodes of the Euclidean distance, one value per batch member."""
    return np.max(np.linalg.norm(a - b, axis=-1), axis=-1)


def _trapezoid_map(drift: DriftSpec, nodes: np.ndarray, k_s: int, noise: np.ndarray, x0: np.ndarray,
                   f: np.ndarray) -> np.ndarray:
    """x + Σ Δ_k/2 [b(n_k, f_k + ℓ_k) + b(n_{k+1}, f_{k+1} + ℓ_k)] on the cells after s."""
    steps = np.diff(nodes)[None, :, None]
    left = drift.evaluate(nodes[:-1, None], f[:, :-1] + noise[:, :-1])
    right = drift.evaluate(nodes[1:, None], f[:, 1:] + noise[:, :-1])
    pieces = 0.5 * steps * (left + right)
    pieces[:, :k_s] = 0.0
    cumulative = np.concatenate([np.zeros_like(pieces[:, :1]), np.cumsum(pieces, axis=1)], axis=1)
    return x0[:, None, :] + cumulative


def _left_point_map(drift: DriftSpec, nodes: np.ndarray, k_s: int, noise: np.ndarray, x0: np.ndarray,
                    f: np.ndarray) -> np.ndarray:
    steps = np.diff(nodes)[None, :, None]
    pieces = steps * drift.evaluate(nodes[:-1, None], f[:, :-1] + noise[:, :-1])
    pieces[:, :k_s] = 0.0
    cumulative = np.concatenate([np.zeros_like(pieces[:, :1]), np.cumsum(pieces, axis=1)], axis=1)
    return x0[:, None, :] + cumulative


def _picard(drift: DriftSpec, nodes: np.ndarray, k_s: int, noise: np.ndarray, x0: np.ndarray, tol: float,
            max_iter: int, initial: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Batch Picard iteration; members freeze once both stopping tests hold."""
    batch, m, d = noise.shape
    f = np.broadcast_to(x0[:, None, :], (batch, m, d)).copy() if initial is None else np.array(initial, dtype=float)
    f[:, : k_s + 1] = x0[:, None, :]
    image = _trapezoid_map(drift, nodes, k_s, noise, x0, f)
    previous = _sup_defect(image, f)

    result = f.copy()
    residual = np.full(batch, np.inf)
    best_defect = previous.copy()
    converged = np.zeros(batch, dtype=bool)
    active = np.arange(batch)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        f = image
        image = _trapezoid_map(drift, nodes, k_s, noise[active], x0[active], f)
        _check_finite(image, "Picard iterate")
        defect = _sup_defect(image, f)

        improved = defect < best_defect[active]
        result[active[improved]] = f[improved]
        best_defect[active[improved]] = defect[improved]
        residual[active[improved]] = defect[improved]

        done = (previous <= 0.5 * tol) & (defect <= tol)
        result[active[done]] = f[done]
        residual[active[done]] = defect[done]
        converged[active[done]] = True

        keep = ~done
        active, f, image, previous = active[keep], f[keep], image[keep], defect[keep]
        if len(active) == 0:
            break
    residual[~converged] = best_defect[~converged]
    return result, residual, converged, iterations


def _euler(drift: DriftSpec, nodes: np.ndarray, k_s: int, noise: np.ndarray,
           x0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    batch, m, d = noise.shape
    y = np.empty((batch, m, d))
    y[:, : k_s + 1] = x0[:, None, :]
    steps = np.diff(nodes)
    for k in range(k_s, m - 1):
        y[:, k + 1] = y[:, k] + steps[k] * drift.evaluate(nodes[k], y[:, k] + noise[:, k])
    _check_finite(y, "Euler march")
    return y, _sup_defect(y, _left_point_map(drift, nodes, k_s, noise, x0, y))


def _resolve_options(method: Optional[str], tol: Optional[float], max_iter: Optional[int]):
    method = method or "picard"
    tol = settings.default_tol if tol is None else tol
    max_iter = settings.default_max_iter if max_iter is None else max_iter
    if method not in METHODS:
        raise ParameterError(f"unknown solver method '{method}', expected one of {METHODS}")
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be at least 1, got {max_iter}")
    return method, tol, max_iter


def _check_start(path: LevyPath, s: float) -> None:
    if not 0.0 <= s <= path.grid.t_end:
        raise DomainError(f"start time s={s} outside [0, {path.grid.t_end}]")


def solve_frozen_batch(drift: DriftSpec, paths: Union[LevyPath, Sequence[LevyPath]], s: float, xs,
                       method: Optional[str] = None, tol: Optional[float] = None, max_iter: Optional[int] = None,
                       initial: Optional[InitialCurve] = None, extra_nodes: Iterable[float] = ()) -> BatchSolution:
    """Solve for every (path, start point) pair on one shared node set.

    `initial` maps the node array to starting curves of shape (points, m, d) for Picard.
    Members that do not converge are flagged in `converged` rather than raised.
    """
    paths = [paths] if isinstance(paths, LevyPath) else list(paths)
    reference = paths[0]
    if any(member.grid != reference.grid for member in paths[1:]):
        raise ParameterError("batched paths must share one time grid")
    method, tol, max_iter = _resolve_options(method, tol, max_iter)
    _check_start(reference, s)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    d = reference.dim
    if xs.shape[1] != d or drift.dim != d:
        raise ParameterError(f"start points and drift must have dimension {d}")

    nodes = solver_nodes(reference, s, extra_nodes, paths)
    k_s = int(np.searchsorted(nodes, s))
    noise = np.stack([noise_at_nodes(member, nodes, s) for member in paths])
    n_paths, n_points, m = len(paths), len(xs), len(nodes)

    flat_noise = np.repeat(noise, n_points, axis=0)
    flat_x0 = np.tile(xs, (n_paths, 1))
    if method == "euler":
        y, residual = _euler(drift, nodes, k_s, flat_noise, flat_x0)
        converged = np.ones(len(flat_x0), dtype=bool)
        iterations = 1
    else:
        start = None
        if initial is not None:
            curves = np.broadcast_to(np.asarray(initial(nodes), dtype=float), (n_points, m, d))
            start = np.tile(curves, (n_paths, 1, 1))
        y, residual, converged, iterations = _picard(drift, nodes, k_s, flat_noise, flat_x0, tol, max_iter, start)
    return BatchSolution(
        nodes=nodes,
        start_time=float(s),
        y_values=y.reshape(n_paths, n_points, m, d),
        noise=noise,
        residual=residual.reshape(n_paths, n_points),
        converged=converged.reshape(n_paths, n_points),
        iterations=iterations,
        method=method,
        tol=tol,
    )


def solve_frozen(drift: DriftSpec, path: LevyPath, s: float, x, method: Optional[str] = None,
                 tol: Optional[float] = None, max_iter: Optional[int] = None,
                 initial: Optional[InitialCurve] = None, extra_nodes: Iterable[float] = ()) -> SolutionCurve:
    """Solve the frozen-path equation on one path from (s, x).

    Raises ConvergenceError carrying the best iterate when Picard stalls.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    batch = solve_frozen_batch(drift, path, s, x[None, :], method, tol, max_iter, initial, extra_nodes)
    y = batch.y_values[0, 0]
    residual = float(batch.residual[0, 0])
    if not batch.converged[0, 0]:
        raise ConvergenceError(
            f"Picard did not reach tol={batch.tol} within {batch.iterations} iterations (defect {residual:.3e})",
            best_iterate=y,
            defect=residual,
        )
    logger.debug("solved from s=%.4f in %d iterations, residual %.2e", s, batch.iterations, residual)
    return SolutionCurve(
        grid=TimeGrid(batch.nodes),
        start_time=float(s),
        start_point=x,
        y_values=y,
        noise=batch.noise[0],
        method=batch.method,
        iterations=batch.iterations,
        residual=residual,
        tol=batch.tol,
    )


def flow(drift: DriftSpec, path: LevyPath, s: float, t: float, x, tol: Optional[float] = None,
         method: Optional[str] = None, extra_nodes: Iterable[float] = ()) -> np.ndarray:
    """φ(s, t, x) = Y_t + L_t - L_s, and x itself when t <= s."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_start(path, s)
    if not 0.0 <= t <= path.grid.t_end:
        raise DomainError(f"t={t} outside [0, {path.grid.t_end}]")
    if t <= s:
        return x.copy()
    curve = solve_frozen(drift, path, s, x, method=method, tol=tol, extra_nodes=[t, *extra_nodes])
    k = curve.node_index(t)
    return curve.x_values[k]


def flow_composition_residual(drift: DriftSpec, path: LevyPath, s: float, r: float, t: float, x,
                              tol: Optional[float] = None, method: Optional[str] = None) -> float:
    """|φ(s, t, x) - φ(r, t, φ(s, r, x))|."""
    if not 0.0 <= s < r <= t <= path.grid.t_end:
        raise DomainError(f"need 0 <= s < r <= t <= T, got s={s}, r={r}, t={t}")
    curve = solve_frozen(drift, path, s, x, method=method, tol=tol, extra_nodes=[r, t])
    direct = curve.x_values[curve.node_index(t)]
    midpoint = curve.x_values[curve.node_index(r)]
    composed = flow(drift, path, r, t, midpoint, tol=tol, method=method)
    return float(np.linalg.norm(direct - composed))

