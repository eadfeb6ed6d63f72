"""Array-valued domain objects.

These hold numpy arrays, so they are frozen dataclasses rather than pydantic models;
the pydantic schemas in `schemas.py` cover everything that is read from configuration.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from levyflow.core.errors import DomainError, ParameterError


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeGrid:
    """Sorted time nodes 0 = t_0 < ... < t_n = T."""

    times: np.ndarray

    def __post_init__(self):
        times = _readonly(self.times)
        if times.ndim != 1 or len(times) < 2:
            raise ParameterError("a time grid needs at least two nodes")
        if times[0] != 0.0:
            raise ParameterError(f"time grid must start at 0, got {times[0]}")
        if np.any(np.diff(times) <= 0) or not np.all(np.isfinite(times)):
            raise ParameterError("time grid must be finite and strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, t_end: float, n_steps: int) -> "TimeGrid":
        if t_end <= 0 or n_steps < 1:
            raise ParameterError(f"need t_end > 0 and n_steps >= 1, got {t_end}, {n_steps}")
        times = np.linspace(0.0, t_end, n_steps + 1)
        times[-1] = t_end
        return cls(times)

    @classmethod
    def from_times(cls, times) -> "TimeGrid":
        return cls(np.asarray(times, dtype=float))

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        """Largest cell width."""
        return float(np.max(np.diff(self.times)))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def is_uniform(self) -> bool:
        steps = self.steps
        return bool(np.allclose(steps, steps[0], rtol=1e-12, atol=0.0))

    def cell_index(self, t) -> np.ndarray:
        """Index i of the largest node t_i <= t."""
        return np.searchsorted(self.times, t, side="right") - 1

    def contains(self, t: float) -> bool:
        return 0.0 <= t <= self.t_end

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self) -> int:
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class LevyPath:
    """One sampled path: cumulative values on a grid plus its jumps of size > 1.

    When `exact_jump_times` is false the jump list is a diagnostic extracted from
    grid increments and every recorded time is a grid node.
    """

    grid: TimeGrid
    values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    seed: int
    model_id: str
    path_index: int = 0
    exact_jump_times: bool = True

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2 or values.shape[0] != len(self.grid.times):
            raise ParameterError(f"values must have shape ({len(self.grid.times)}, d), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("path values must be finite")
        if np.any(values[0] != 0.0):
            raise ParameterError("a Lévy path starts at 0")
        d = values.shape[1]
        jump_times = _readonly(np.reshape(self.jump_times, (-1,)))
        jump_sizes = _readonly(np.reshape(self.jump_sizes, (-1, d)))
        if len(jump_times) != len(jump_sizes):
            raise ParameterError("jump_times and jump_sizes differ in length")
        if len(jump_times):
            if np.any(jump_times <= 0.0) or np.any(jump_times > self.grid.t_end):
                raise ParameterError("big-jump times must lie in (0, T]")
            if np.any(np.linalg.norm(jump_sizes, axis=1) <= 1.0):
                raise ParameterError("recorded big jumps must have size > 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "jump_times", jump_times)
        object.__setattr__(self, "jump_sizes", jump_sizes)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def big_jumps(self) -> List[Tuple[float, np.ndarray]]:
        return [(float(t), size.copy()) for t, size in zip(self.jump_times, self.jump_sizes)]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


@dataclass(frozen=True)
class SolutionCurve:
    """Continuous part Y of the frozen-path solution started from x at time s.

    `grid` is the merged node set actually used by the solver (grid nodes, s, big-jump
    times and any requested evaluation times). `noise` holds L_t - L_s at those nodes
    with the path's left limit convention inside each cell, so X = Y + noise.
    """

    grid: TimeGrid
    start_time: float
    start_point: np.ndarray
    y_values: np.ndarray
    noise: np.ndarray
    method: str
    iterations: int
    residual: float
    tol: float

    @property
    def x_values(self) -> np.ndarray:
        return self.y_values + self.noise

    def node_index(self, t: float) -> Optional[int]:
        index = int(np.searchsorted(self.grid.times, t))
        if index < len(self.grid.times) and self.grid.times[index] == t:
            return index
        return None

    def value_at(self, t: float) -> np.ndarray:
        """Y at time t by linear interpolation between nodes (Y is continuous)."""
        if not self.grid.contains(t):
            raise DomainError(f"t={t} outside [0, {self.grid.t_end}]")
        return np.array([np.interp(t, self.grid.times, self.y_values[:, j]) for j in range(self.y_values.shape[1])])


@dataclass(frozen=True)
class BatchSolution:
    """Solutions for a batch of (path, start point) members sharing one node set."""

    nodes: np.ndarray
    start_time: float
    y_values: np.ndarray  # (paths, points, nodes, d)
    noise: np.ndarray  # (paths, nodes, d)
    residual: np.ndarray  # (paths, points)
    converged: np.ndarray  # (paths, points)
    iterations: int
    method: str
    tol: float

    @property
    def x_values(self) -> np.ndarray:
        return self.y_values + self.noise[:, None, :, :]

    def node_index(self, t: float) -> int:
        index = int(np.searchsorted(self.nodes, t))
        if index >= len(self.nodes) or self.nodes[index] != t:
            raise DomainError(f"t={t} is not a solver node")
        return index


@dataclass(frozen=True)
class DensityTable:
    """Density of L_t for the one-dimensional symmetric stable law with symbol scale·|h|^α."""

    alpha: float
    t: float
    x_grid: np.ndarray
    density: np.ndarray
    derivative: np.ndarray
    scale: float = 1.0
    tail_mass: float = 0.0

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def total_mass(self) -> float:
        return float(np.sum(self.density) * self.dx + self.tail_mass)


@dataclass(frozen=True)
class ResolventEstimate:
    lam: float
    x_probe: np.ndarray
    u_values: np.ndarray
    du_values: np.ndarray
    du_sup: float
    n_paths: int
    seed: int
    horizon: float
    u_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    du_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
