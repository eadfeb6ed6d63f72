import math
import pytest
import numpy as np
from scipy import signal, stats

from levyflow.core.errors import HorizonError, ParameterError, ResolutionError
from levyflow.models.schemas import DriftKind, DriftSpec, ProbeFunction, ProbeKind
from levyflow.services import levy_model as lm
from levyflow.services.kolmogorov import (
    default_density_grid,
    default_horizon,
    drift_free_resolvent,
    exponential_weights,
    gradient_estimate_check,
    lambda0_search,
    resolvent_mc,
    stable_density_1d,
)


def _odd_grid(n_points: int = 2 ** 14 + 1, dx: float = 0.01) -> np.ndarray:
    return (np.arange(n_points) - n_points // 2) * dx


class TestStableDensity:
    """Fourier inversion of the symmetric stable law."""

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    @pytest.mark.parametrize("t", [0.1, 1.0])
    def test_gaussian_case(self, t):
        table = stable_density_1d(2.0, t)
        expected = stats.norm.pdf(table.x_grid, scale=math.sqrt(2.0 * t))
        np.testing.assert_allclose(table.density, expected, atol=1e-8)
        assert table.tail_mass == 0.0

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_cauchy_case(self):
        table = stable_density_1d(1.0, 1.0)
        expected = 1.0 / (math.pi * (1.0 + table.x_grid ** 2))
        np.testing.assert_allclose(table.density, expected, atol=1e-6)
        derivative = -2.0 * table.x_grid / (math.pi * (1.0 + table.x_grid ** 2) ** 2)
        np.testing.assert_allclose(table.derivative, derivative, atol=1e-5)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    @pytest.mark.parametrize("alpha", [0.8, 1.5])
    @pytest.mark.parametrize("t", [0.1, 1.0])
    def test_total_mass(self, alpha, t):
        table = stable_density_1d(alpha, t)
        assert table.total_mass() == pytest.approx(1.0, abs=1e-5)
        assert table.tail_mass > 0.0

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_density_is_symmetric(self):
        table = stable_density_1d(1.3, 0.5)
        # the default grid is x_0 = -w plus a symmetric block around zero
        np.testing.assert_allclose(table.density[1:], table.density[1:][::-1], atol=1e-10)
        np.testing.assert_allclose(table.derivative[1:], -table.derivative[1:][::-1], atol=1e-8)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_default_grid_half_width(self):
        small_time = default_density_grid(1.5, 0.01)
        assert len(small_time) == 2 ** 16
        assert small_time[0] == -20.0
        assert 0.0 in small_time
        assert default_density_grid(1.5, 8.0, n_points=1024)[0] == pytest.approx(-80.0)
        assert default_density_grid(1.0, 2.0, scale=3.0, n_points=1024)[0] == pytest.approx(-120.0)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_scale_matches_time_change(self):
        x = _odd_grid()
        scaled = stable_density_1d(1.5, 0.5, x, scale=2.0)
        unscaled = stable_density_1d(1.5, 1.0, x)
        np.testing.assert_allclose(scaled.density, unscaled.density, atol=1e-12)

    @pytest.mark.kolmogorov
    @pytest.mark.integration
    def test_semigroup_property(self):
        x = _odd_grid()
        first = stable_density_1d(1.5, 0.3, x)
        second = stable_density_1d(1.5, 0.5, x)
        combined = stable_density_1d(1.5, 0.8, x)
        convolved = signal.fftconvolve(first.density, second.density, mode="same") * first.dx
        window = np.abs(x) <= 10.0
        np.testing.assert_allclose(convolved[window], combined.density[window], atol=1e-5)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_narrow_grid_asks_for_more_width(self):
        x = (np.arange(128) - 64) * 0.05
        with pytest.raises(ResolutionError) as exc_info:
            stable_density_1d(1.5, 1.0, x)
        assert exc_info.value.suggested_width > 3.2

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_coarse_grid_rejected(self):
        x = (np.arange(64) - 32) * 1.0
        with pytest.raises(ResolutionError) as exc_info:
            stable_density_1d(1.5, 0.01, x)
        assert exc_info.value.suggested_width > 0.0

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    @pytest.mark.parametrize("alpha,t", [(0.0, 1.0), (2.5, 1.0), (1.5, 0.0), (1.5, -1.0)])
    def test_invalid_parameters(self, alpha, t):
        with pytest.raises(ParameterError):
            stable_density_1d(alpha, t)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_grid_must_contain_origin(self):
        with pytest.raises(ParameterError):
            stable_density_1d(1.5, 1.0, np.linspace(1.0, 50.0, 1024))


class TestGradientEstimate:
    """sup|DP_t f| ≲ t^{-1/α}‖f‖₀."""

    @pytest.mark.kolmogorov
    @pytest.mark.integration
    @pytest.mark.parametrize("alpha", [2.0, 1.5, 0.8])
    def test_step_function_binds_with_exact_rate(self, alpha):
        slope, details = gradient_estimate_check(alpha, [0.05, 0.1, 0.2, 0.5, 1.0])
        assert details["binding_probe"] == "step"
        assert slope == pytest.approx(-1.0 / alpha, abs=0.01)
        assert set(details["probes"]) == {"step", "bump", "oscillatory"}

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_times_must_lie_in_unit_interval(self):
        with pytest.raises(ParameterError):
            gradient_estimate_check(1.5, [0.5, 2.0])
        with pytest.raises(ParameterError):
            gradient_estimate_check(1.5, [0.5])

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_unknown_test_function(self):
        with pytest.raises(ParameterError):
            gradient_estimate_check(1.5, [0.5, 1.0], f_probe_set=("square",))


class TestResolvent:
    """Monte Carlo resolvent u = E ∫ e^{-λt} f(X_t) dt."""

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_default_horizon(self):
        assert default_horizon(1.0, 1.0, 1e-6) == pytest.approx(math.log(1e6))
        assert default_horizon(10.0, 1.0, 1e-6) == pytest.approx(1.2)
        assert default_horizon(2.0, 0.0, 1e-6) == pytest.approx(6.0)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_exponential_weights_telescope(self):
        nodes = np.linspace(0.0, 2.0, 9)
        weights = exponential_weights(nodes, 1.5)
        assert weights.shape == (8,)
        assert weights.sum() == pytest.approx((1.0 - math.exp(-3.0)) / 1.5)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_constant_source_is_exact(self, zero_drift, stable_model, small_context):
        f = ProbeFunction(kind=ProbeKind.CONSTANT, value=1.0)
        estimate = resolvent_mc(zero_drift, f, 2.0, [0.0, 1.5], stable_model, n_paths=8, seed=1,
                                context=small_context, n_steps=32)
        expected = (1.0 - math.exp(-2.0 * estimate.horizon)) / 2.0
        np.testing.assert_allclose(estimate.u_values, expected, rtol=1e-12)
        np.testing.assert_allclose(estimate.u_sigma, 0.0, atol=1e-12)
        np.testing.assert_allclose(estimate.du_values, 0.0, atol=1e-9)

    @pytest.mark.kolmogorov
    @pytest.mark.integration
    def test_cosine_source_without_drift(self, zero_drift, stable_model, small_context):
        f = ProbeFunction(kind=ProbeKind.COSINE, k=1.0, value=1.0)
        x_probes = [0.0, 1.0]
        estimate = resolvent_mc(zero_drift, f, 1.0, x_probes, stable_model, n_paths=2000, seed=5,
                                context=small_context, n_steps=64)
        psi = lm.exponent(stable_model, [1.0]).real
        nodes = np.linspace(0.0, estimate.horizon, 65)
        expected = drift_free_resolvent(1.0, 1.0, np.array(x_probes), psi, nodes)
        assert np.all(np.abs(estimate.u_values - expected) <= 4.0 * estimate.u_sigma + 1e-3)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_drift_free_resolvent_limit(self):
        nodes = np.linspace(0.0, 30.0, 300001)
        value = drift_free_resolvent(1.0, 1.0, np.array([0.0]), 0.5, nodes)
        assert value[0] == pytest.approx(1.0 / 1.5, abs=1e-3)

    @pytest.mark.kolmogorov
    @pytest.mark.integration
    def test_maximum_principle(self, bump_drift, stable_model, small_context):
        f = ProbeFunction(kind=ProbeKind.COSINE, k=2.0, value=1.0)
        estimate = resolvent_mc(bump_drift, f, 2.0, [-1.0, 0.0, 1.0], stable_model, n_paths=40, seed=2,
                                context=small_context, n_steps=64)
        assert np.all(np.abs(estimate.u_values) <= f.sup_norm / 2.0 + 1e-6)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_short_horizon_rejected(self, zero_drift, stable_model, small_context):
        f = ProbeFunction(kind=ProbeKind.CONSTANT, value=1.0)
        with pytest.raises(HorizonError):
            resolvent_mc(zero_drift, f, 1.0, [0.0], stable_model, horizon=0.1, n_paths=2, context=small_context)

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_lambda_below_one_rejected(self, zero_drift, stable_model, small_context):
        f = ProbeFunction(kind=ProbeKind.CONSTANT, value=1.0)
        with pytest.raises(ParameterError):
            resolvent_mc(zero_drift, f, 0.5, [0.0], stable_model, n_paths=2, context=small_context)


class TestLambda0:
    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_zero_drift_is_below_threshold_everywhere(self, zero_drift, stable_model, small_context):
        search = lambda0_search(zero_drift, stable_model, 0.5, [0.0], [4.0, 1.0, 2.0], n_paths=4, seed=0,
                                context=small_context, n_steps=16)
        assert search.found
        assert search.lambda0 == 1.0
        assert search.grid == [1.0, 2.0, 4.0]
        assert search.du_sup_by_lambda == [0.0, 0.0, 0.0]
        assert search.slope is None
        assert search.target_slope == pytest.approx(-1.0 / 2.0)
        assert set(search.record()) == {"lambda0", "slope", "grid", "du_sup_by_lambda"}
        assert [estimate.lam for estimate in search.estimates] == [1.0, 2.0, 4.0]

    @pytest.mark.kolmogorov
    @pytest.mark.integration
    @pytest.mark.slow
    def test_holder_drift_gradient_decays(self, stable_model, small_context):
        drift = DriftSpec(kind=DriftKind.HOLDER_POWER, dim=1, beta=0.6)
        search = lambda0_search(drift, stable_model, 0.6, [0.0], [1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
                                n_paths=2000, seed=0, context=small_context, n_steps=64)
        assert search.found
        assert search.du_sup_by_lambda[search.grid.index(search.lambda0)] < 1.0 / 3.0
        assert search.target_slope == pytest.approx(-1.1 / 2.1)
        assert search.slope is not None
        assert search.slope <= search.target_slope + 0.15
        assert len(search.estimates) == 6

    @pytest.mark.kolmogorov
    @pytest.mark.unit
    def test_grid_must_start_at_one(self, zero_drift, stable_model, small_context):
        with pytest.raises(ParameterError):
            lambda0_search(zero_drift, stable_model, 0.5, [0.0], [0.5, 2.0], n_paths=2, context=small_context)
