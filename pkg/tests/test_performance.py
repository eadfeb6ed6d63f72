import pytest
import time
import statistics
import numpy as np

from levyflow.models.arrays import TimeGrid
from levyflow.services.kolmogorov import stable_density_1d
from levyflow.services.path_sampler import sample_paths
from levyflow.services.pathwise_solver import solve_frozen_batch
from levyflow.services.shards import ShardPool


class TestSamplerPerformance:
    """Throughput of the path samplers."""

    @pytest.mark.performance
    @pytest.mark.slow
    def test_exact_sampler_throughput(self, stable_model):
        grid = TimeGrid.uniform(1.0, 256)
        times = []
        for seed in range(3):
            start_time = time.time()
            paths = sample_paths(stable_model, grid, seed, 500)
            times.append(time.time() - start_time)
            assert len(paths) == 500

        # 500 paths of 256 steps each
        assert statistics.mean(times) < 5.0

    @pytest.mark.performance
    @pytest.mark.slow
    def test_levy_ito_sampler_throughput(self, tempered_model):
        grid = TimeGrid.uniform(1.0, 256)
        start_time = time.time()
        paths = sample_paths(tempered_model, grid, 1, 200, method="levy_ito", epsilon=0.01)
        elapsed = time.time() - start_time
        assert len(paths) == 200
        assert elapsed < 10.0


class TestSolverPerformance:
    @pytest.mark.performance
    @pytest.mark.slow
    def test_batch_solve_time(self, bump_drift, stable_model):
        grid = TimeGrid.uniform(1.0, 1024)
        paths = sample_paths(stable_model, grid, 2, 8)
        starts = np.linspace(-1.0, 1.0, 16)[:, None]
        start_time = time.time()
        batch = solve_frozen_batch(bump_drift, paths, 0.0, starts, tol=1e-8)
        elapsed = time.time() - start_time
        assert batch.converged.all()
        assert elapsed < 20.0


class TestDensityPerformance:
    @pytest.mark.performance
    @pytest.mark.slow
    def test_default_grid_density(self):
        times = []
        for alpha in (0.8, 1.2, 1.7):
            start_time = time.time()
            table = stable_density_1d(alpha, 0.5)
            times.append(time.time() - start_time)
            assert table.total_mass() == pytest.approx(1.0, abs=1e-5)

        assert max(times) < 2.0


class TestShardPool:
    @pytest.mark.performance
    @pytest.mark.slow
    def test_thread_pool_result_matches_serial(self, stable_model):
        grid = TimeGrid.uniform(1.0, 128)

        def worker(shard_seed, index):
            return float(sample_paths(stable_model, grid, shard_seed, 1, start_index=index)[0].values[-1, 0])

        serial = ShardPool(13, shards=4, threads=1).map_paths(worker, 64)
        threaded = ShardPool(13, shards=4, threads=4).map_paths(worker, 64)
        assert serial == threaded
