"""Deterministic shard pool for Monte Carlo drivers.

The master seed is split into shard seeds with `shard_seed`; paths are numbered inside
their shard and results are folded back in shard order, so output never depends on
the thread count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
from typing import Callable, List, Optional, Tuple, TypeVar

from levyflow.core.config import settings
from levyflow.models.arrays import TimeGrid
from levyflow.models.schemas import ExperimentConfig, Thresholds
from levyflow.services.rng import shard_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class ExecutionContext:
    """Grid, solver, sampler and seeding knobs shared by every experiment driver."""

    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(1.0, settings.default_n_steps))
    method: str = "picard"
    tol: float = field(default_factory=lambda: settings.default_tol)
    max_iter: int = field(default_factory=lambda: settings.default_max_iter)
    sampler_method: str = "exact"
    epsilon: float = field(default_factory=lambda: settings.small_jump_epsilon)
    shards: int = 4
    threads: int = field(default_factory=lambda: settings.threads)
    thresholds: Thresholds = field(default_factory=Thresholds)

    @classmethod
    def from_config(cls, config: ExperimentConfig, threads: Optional[int] = None) -> "ExecutionContext":
        return cls(
            grid=TimeGrid.uniform(config.grid.t_end, config.grid.n_steps),
            method=config.solver.method,
            tol=config.solver.tol,
            max_iter=config.solver.max_iter,
            sampler_method=config.sampler.method,
            epsilon=config.sampler.epsilon,
            shards=config.seeds.shards,
            threads=threads or settings.threads,
            thresholds=config.thresholds,
        )

    def replace(self, **changes) -> "ExecutionContext":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return ExecutionContext(**values)

    def snapshot(self) -> dict:
        return {
            "t_end": self.grid.t_end,
            "n_steps": self.grid.n_steps,
            "method": self.method,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "sampler_method": self.sampler_method,
            "epsilon": self.epsilon,
            "shards": self.shards,
            "thresholds": self.thresholds.model_dump(),
        }


class ShardPool:
    def __init__(self, master_seed: int, shards: int = 4, threads: int = 1):
        self.master_seed = int(master_seed)
        self.shards = max(1, int(shards))
        self.threads = max(1, int(threads))

    @property
    def seeds(self) -> List[int]:
        return [shard_seed(self.master_seed, i) for i in range(self.shards)]

    def plan(self, n_paths: int) -> List[Tuple[int, int]]:
        """(shard seed, number of paths) per shard; the remainder goes to the first shards."""
        base, extra = divmod(int(n_paths), self.shards)
        return [(seed, base + (1 if i < extra else 0)) for i, seed in enumerate(self.seeds)]

    def map_shards(self, worker: Callable[[int, int], T], n_paths: int) -> List[T]:
        """Run worker(shard_seed, n_in_shard) per shard, results in shard order."""
        plan = self.plan(n_paths)
        if self.threads == 1:
            return [worker(seed, count) for seed, count in plan]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(lambda item: worker(*item), plan))

    def map_paths(self, worker: Callable[[int, int], T], n_paths: int) -> List[T]:
        """Run worker(shard_seed, path_index) for every path, flattened in shard order."""

        def run_shard(seed: int, count: int) -> List[T]:
            return [worker(seed, index) for index in range(count)]

        results: List[T] = []
        for shard_results in self.map_shards(run_shard, n_paths):
            results.extend(shard_results)
        logger.debug("evaluated %d paths over %d shards", len(results), self.shards)
        return results

    def path_keys(self, n_paths: int) -> List[Tuple[int, int]]:
        return [(seed, index) for seed, count in self.plan(n_paths) for index in range(count)]
