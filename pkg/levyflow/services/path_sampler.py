"""Seeded càdlàg Lévy paths on a time grid.

Isotropic and singular stable families get exact marginal increments by the
Chambers–Mallows–Stuck transform. Every other family, and the stable families when
`method="levy_ito"`, is built from the Lévy–Itô decomposition:

* Gaussian part with covariance Q·Δt,
* jumps with |y| <= ε replaced by a Gaussian of matched covariance,
* jumps with ε < |y| <= 1 as a compound Poisson sum (zero compensator, ν is symmetric),
* jumps with |y| > 1 at exact uniform times, recorded on the path.
"""
from concurrent.futures import ThreadPoolExecutor
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate

from levyflow.core.config import settings
from levyflow.core.errors import DomainError, ParameterError
from levyflow.models.arrays import LevyPath, TimeGrid
from levyflow.models.schemas import LevyFamily, LevyModel
from levyflow.services import levy_model as lm
from levyflow.services.rng import Stream, keyed_generator

logger = logging.getLogger(__name__)

EXACT_FAMILIES = frozenset({LevyFamily.ISOTROPIC_STABLE, LevyFamily.SINGULAR_STABLE})
BIG_JUMP_RADIUS = 1.0
CUSTOM_TABLE_POINTS = 4097
CUSTOM_TABLE_CAP = 1e6


def cms_transform(alpha: float, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Symmetric Chambers–Mallows–Stuck map with E exp(ihX) = exp(-|h|^α).

    v is uniform on (-π/2, π/2) and w is standard exponential. The map is odd in v.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if alpha == 1.0:
        return np.tan(v)
    if alpha == 2.0:
        return 2.0 * np.sin(v) * np.sqrt(w)
    return (
        np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def stable_increment(alpha: float, scale: float, dt, rng: np.random.Generator, size=None):
    """Symmetric α-stable draw with E exp(ihX) = exp(-scale·dt·|h|^α).

    α = 2 gives N(0, 2·scale·dt). `dt` may be an array broadcastable to `size`.
    """
    if not 0.0 < alpha <= 2.0:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    if np.any(np.asarray(dt) <= 0):
        raise ParameterError("dt must be positive")
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=size)
    w = rng.standard_exponential(size=size)
    draw = cms_transform(alpha, v, w) * (scale * np.asarray(dt, dtype=float)) ** (1.0 / alpha)
    return float(draw) if size is None else draw


def positive_stable(index: float, rng: np.random.Generator, size) -> np.ndarray:
    """Kanter's positive stable variable with E exp(-uA) = exp(-u^index), index in (0, 1)."""
    u = rng.uniform(0.0, math.pi, size=size)
    e = rng.standard_exponential(size=size)
    return (
        np.sin(index * u) / np.sin(u) ** (1.0 / index)
        * (np.sin((1.0 - index) * u) / e) ** ((1.0 - index) / index)
    )


def _isotropic_stable_increments(alpha: float, coefficient: float, dt: np.ndarray, d: int, rng) -> np.ndarray:
    """Increments with exponent coefficient·|h|^α over cells of width dt, shape (n, d)."""
    n = len(dt)
    if d == 1:
        return stable_increment(alpha, coefficient, dt[:, None], rng, size=(n, 1))
    # sub-Gaussian representation: sqrt(A)·G with G ~ N(0, 2I)
    mixing = positive_stable(alpha / 2.0, rng, size=(n, 1))
    gaussian = math.sqrt(2.0) * rng.standard_normal((n, d))
    return (coefficient * dt[:, None]) ** (1.0 / alpha) * np.sqrt(mixing) * gaussian


def _directions(count: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return (2.0 * rng.integers(0, 2, size=count) - 1.0)[:, None]
    g = rng.standard_normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _matrix_sqrt(q: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(q)
    return vectors @ np.diag(np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.T


class JumpLaw:
    """Radii of ν restricted to a < |y| <= b, as a Poisson stream with rate `rate` per unit time.

    Stable-type families propose from the power law c·r^{-1-α} and thin by the tilt;
    the custom family inverts a tabulated cumulative mass.
    """

    def __init__(self, model: LevyModel, a: float, b: float = math.inf):
        self.model = model
        self.a = a
        self.b = min(b, model.trunc_r) if model.family == LevyFamily.TRUNCATED_STABLE else b
        self.table: Optional[Tuple[np.ndarray, np.ndarray]] = None
        if self.b <= a:
            self.rate = 0.0
        elif model.family == LevyFamily.CUSTOM:
            radii = np.geomspace(a, min(self.b, CUSTOM_TABLE_CAP), CUSTOM_TABLE_POINTS)
            cumulative = integrate.cumulative_trapezoid(lm.radial_mass_density(model, radii), radii, initial=0.0)
            self.table = (radii, cumulative)
            self.rate = float(cumulative[-1])
        else:
            alpha = model.alpha
            upper = 0.0 if math.isinf(self.b) else self.b ** -alpha
            self.rate = lm.radial_coefficient(model) * lm.sphere_area(model.dim) * (a ** -alpha - upper) / alpha

    @property
    def thinned(self) -> bool:
        return self.model.family in (LevyFamily.TEMPERED_STABLE, LevyFamily.RELATIVISTIC_STABLE)

    def draw(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Draw `count` proposals; returns (radii, accepted mask)."""
        u = rng.uniform(size=count)
        if self.table is not None:
            radii, cumulative = self.table
            return np.interp(u * self.rate, cumulative, radii), np.ones(count, dtype=bool)
        alpha = self.model.alpha
        upper = 0.0 if math.isinf(self.b) else self.b ** -alpha
        radii = (self.a ** -alpha - u * (self.a ** -alpha - upper)) ** (-1.0 / alpha)
        if not self.thinned:
            return radii, np.ones(count, dtype=bool)
        return radii, rng.uniform(size=count) < lm.radial_tilt(self.model, radii)


def _axis_model(model: LevyModel) -> LevyModel:
    """One coordinate of a singular stable model as a one-dimensional isotropic model."""
    return LevyModel(family=LevyFamily.ISOTROPIC_STABLE, dim=1, alpha=model.alpha, scale=model.scale)


def _conditioned_gaussian(count: int, d: int, rng: np.random.Generator, outside: bool) -> np.ndarray:
    """Standard Gaussian vectors conditioned on |G| > 1 (outside) or |G| <= 1."""
    kept: List[np.ndarray] = []
    total = 0
    while total < count:
        batch = rng.standard_normal((2 * (count - total) + 16, d))
        norms = np.linalg.norm(batch, axis=1)
        batch = batch[norms > BIG_JUMP_RADIUS] if outside else batch[norms <= BIG_JUMP_RADIUS]
        kept.append(batch)
        total += len(batch)
    return np.concatenate(kept)[:count] if kept else np.zeros((0, d))


def _cell_sums(cells: np.ndarray, sizes: np.ndarray, n_cells: int) -> np.ndarray:
    d = sizes.shape[1]
    return np.stack([np.bincount(cells, weights=sizes[:, j], minlength=n_cells) for j in range(d)], axis=1)


def _middle_jump_sums(law: JumpLaw, dt: np.ndarray, d: int, rng: np.random.Generator,
                      axis: Optional[int] = None) -> np.ndarray:
    n = len(dt)
    if law.rate == 0.0:
        return np.zeros((n, d))
    counts = rng.poisson(law.rate * dt)
    cells = np.repeat(np.arange(n), counts)
    radii, accepted = law.draw(len(cells), rng)
    if axis is None:
        sizes = radii[:, None] * _directions(len(cells), d, rng)
    else:
        sizes = np.zeros((len(cells), d))
        sizes[:, axis] = radii * _directions(len(cells), 1, rng)[:, 0]
    return _cell_sums(cells[accepted], sizes[accepted], n)


def _small_jump_increments(model: LevyModel, dt: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Jumps of size <= 1 aggregated per cell."""
    n, d = len(dt), model.dim
    family = model.family
    if family == LevyFamily.COMPOUND_POISSON:
        rate = lm.levy_measure_mass(model, 1e-300, BIG_JUMP_RADIUS)
        counts = rng.poisson(rate * dt)
        cells = np.repeat(np.arange(n), counts)
        sizes = _conditioned_gaussian(len(cells), d, rng, outside=False)
        return _cell_sums(cells, sizes, n)

    covariance = lm.small_jump_covariance(model, epsilon)
    increments = (rng.standard_normal((n, d)) * np.sqrt(dt)[:, None]) @ _matrix_sqrt(covariance).T
    if family == LevyFamily.SINGULAR_STABLE:
        law = JumpLaw(_axis_model(model), epsilon, BIG_JUMP_RADIUS)
        for axis in range(d):
            increments += _middle_jump_sums(law, dt, d, rng, axis=axis)
        return increments
    return increments + _middle_jump_sums(JumpLaw(model, epsilon, BIG_JUMP_RADIUS), dt, d, rng)


def _sample_big_jumps(model: LevyModel, t_end: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    d = model.dim
    family = model.family
    if family == LevyFamily.BROWNIAN:
        return np.zeros(0), np.zeros((0, d))
    if family == LevyFamily.COMPOUND_POISSON:
        count = rng.poisson(lm.levy_measure_mass(model, BIG_JUMP_RADIUS) * t_end)
        times = t_end - rng.uniform(0.0, t_end, size=count)
        sizes = _conditioned_gaussian(count, d, rng, outside=True)
    elif family == LevyFamily.SINGULAR_STABLE:
        law = JumpLaw(_axis_model(model), BIG_JUMP_RADIUS)
        time_parts, size_parts = [], []
        for axis in range(d):
            count = rng.poisson(law.rate * t_end)
            time_parts.append(t_end - rng.uniform(0.0, t_end, size=count))
            radii, _ = law.draw(count, rng)
            sizes = np.zeros((count, d))
            sizes[:, axis] = radii * _directions(count, 1, rng)[:, 0]
            size_parts.append(sizes)
        times, sizes = np.concatenate(time_parts), np.concatenate(size_parts)
    else:
        law = JumpLaw(model, BIG_JUMP_RADIUS)
        count = rng.poisson(law.rate * t_end) if law.rate > 0 else 0
        times = t_end - rng.uniform(0.0, t_end, size=count)
        radii, accepted = law.draw(count, rng)
        sizes = radii[:, None] * _directions(count, d, rng)
        times, sizes = times[accepted], sizes[accepted]
    order = np.argsort(times, kind="stable")
    return times[order], sizes[order]


def big_jump_component(model: LevyModel, t_end: float, seed: int, path_index: int = 0) -> List[Tuple[float, np.ndarray]]:
    """Jumps of size > 1 on (0, t_end]: Poisson(t_end·ν(|y|>1)) many, sizes from normalized ν."""
    times, sizes = _sample_big_jumps(model, t_end, keyed_generator(seed, path_index, Stream.BIG_JUMPS))
    return [(float(t), size) for t, size in zip(times, sizes)]


def _extract_big_increments(grid: TimeGrid, increments: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    big = np.linalg.norm(increments, axis=1) > BIG_JUMP_RADIUS
    return grid.times[1:][big], increments[big]


def sample_path(model: LevyModel, grid: TimeGrid, seed: int, path_index: int = 0,
                method: str = "exact", epsilon: Optional[float] = None) -> LevyPath:
    if method not in ("exact", "levy_ito"):
        raise ParameterError(f"unknown sampler method '{method}'")
    epsilon = settings.small_jump_epsilon if epsilon is None else epsilon
    if not 0.0 < epsilon <= BIG_JUMP_RADIUS:
        raise ParameterError(f"epsilon must lie in (0, 1], got {epsilon}")
    dt = grid.steps
    n, d = grid.n_steps, model.dim
    increments = np.zeros((n, d))

    q = model.q
    if np.any(q != 0.0):
        rng = keyed_generator(seed, path_index, Stream.GAUSSIAN)
        increments += (rng.standard_normal((n, d)) * np.sqrt(dt)[:, None]) @ _matrix_sqrt(q).T

    exact = method == "exact" and model.family in EXACT_FAMILIES
    if exact:
        rng = keyed_generator(seed, path_index, Stream.STABLE)
        if model.family == LevyFamily.ISOTROPIC_STABLE:
            coefficient = model.scale * lm.stable_symbol_constant(d, model.alpha)
            increments += _isotropic_stable_increments(model.alpha, coefficient, dt, d, rng)
        else:
            coefficient = model.scale * lm.stable_symbol_constant(1, model.alpha)
            increments += stable_increment(model.alpha, coefficient, dt[:, None], rng, size=(n, d))
        jump_times, jump_sizes = _extract_big_increments(grid, increments)
    elif model.family != LevyFamily.BROWNIAN:
        rng = keyed_generator(seed, path_index, Stream.SMALL_JUMPS)
        increments += _small_jump_increments(model, dt, epsilon, rng)
        jump_times, jump_sizes = _sample_big_jumps(model, grid.t_end, keyed_generator(seed, path_index, Stream.BIG_JUMPS))
        cells = np.searchsorted(grid.times, jump_times, side="left") - 1
        increments += _cell_sums(cells, jump_sizes, n) if len(cells) else 0.0
    else:
        jump_times, jump_sizes = np.zeros(0), np.zeros((0, d))

    values = np.vstack([np.zeros((1, d)), np.cumsum(increments, axis=0)])
    return LevyPath(
        grid=grid,
        values=values,
        jump_times=jump_times,
        jump_sizes=jump_sizes,
        seed=int(seed),
        model_id=model.model_id,
        path_index=int(path_index),
        exact_jump_times=not exact,
    )


def sample_paths(model: LevyModel, grid: TimeGrid, seed: int, n_paths: int, method: str = "exact",
                 epsilon: Optional[float] = None, threads: int = 1, start_index: int = 0) -> List[LevyPath]:
    """Paths start_index, ..., start_index + n_paths - 1 of the keyed family."""
    indices = range(start_index, start_index + n_paths)
    sample = lambda index: sample_path(model, grid, seed, index, method, epsilon)
    if threads <= 1:
        return [sample(index) for index in indices]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(sample, indices))


def zero_path(grid: TimeGrid, dim: int = 1, seed: int = 0) -> LevyPath:
    """The degenerate path L ≡ 0 used by noise-off controls."""
    return LevyPath(grid=grid, values=np.zeros((len(grid.times), dim)), jump_times=np.zeros(0),
                    jump_sizes=np.zeros((0, dim)), seed=seed, model_id="zero")


def _check_time(path: LevyPath, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > path.grid.t_end) or not np.all(np.isfinite(t)):
        raise DomainError(f"time outside [0, {path.grid.t_end}]")
    return t


def path_value(path: LevyPath, t: float) -> np.ndarray:
    """values[i] for the largest grid time t_i <= t."""
    t = _check_time(path, t)
    return path.values[int(path.grid.cell_index(t))].copy()


def jump_resolved_values(path: LevyPath, ts) -> np.ndarray:
    """Càdlàg values at times ts, adding big jumps that fall inside a grid cell before t."""
    ts = np.atleast_1d(_check_time(path, ts))
    index = path.grid.cell_index(ts)
    values = path.values[index].copy()
    if path.exact_jump_times:
        left = path.grid.times[index]
        for time, size in zip(path.jump_times, path.jump_sizes):
            inside = (time > left) & (time <= ts)
            values[inside] += size
    return values


def jump_resolved_value(path: LevyPath, t: float) -> np.ndarray:
    return jump_resolved_values(path, [t])[0]


def coarsen_path(path: LevyPath, factor: int) -> LevyPath:
    """Keep every factor-th node; the coarse increments are sums of fine ones."""
    if factor < 1 or path.grid.n_steps % factor:
        raise ParameterError(f"factor {factor} does not divide {path.grid.n_steps} steps")
    grid = TimeGrid(path.grid.times[::factor])
    values = path.values[::factor]
    if path.exact_jump_times:
        jump_times, jump_sizes = path.jump_times, path.jump_sizes
    else:
        jump_times, jump_sizes = _extract_big_increments(grid, np.diff(values, axis=0))
    return LevyPath(grid=grid, values=values, jump_times=jump_times, jump_sizes=jump_sizes, seed=path.seed,
                    model_id=path.model_id, path_index=path.path_index, exact_jump_times=path.exact_jump_times)
