"""Characteristic exponents, Lévy-measure masses and indices for the catalog families.

Jump measures of the radial families are written ν(dy) = c·|y|^{-d-α}·tilt(|y|) dy,
so the sampler can draw from the stable proposal and thin by the tilt.
"""
import logging
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special, stats

from levyflow.core.errors import NumericError, ParameterError, UnsupportedModelError
from levyflow.models.schemas import LevyFamily, LevyModel, MomentCert, RADIAL_FAMILIES

logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-8
QUAD_EPSABS = 1e-13
QUAD_LIMIT = 500
BG_TOLERANCE = 1e-3
CONVERGENCE_PROBE = 1e-8

ArrayLike = Union[float, Sequence[float], np.ndarray]


def stable_symbol_constant(d: int, alpha: float) -> float:
    """K with ∫(1 - cos⟨h,y⟩)|y|^{-d-α}dy = K|h|^α."""
    return (
        math.pi ** (d / 2.0) * math.gamma(1.0 - alpha / 2.0)
        / (alpha * 2.0 ** (alpha - 1.0) * math.gamma((d + alpha) / 2.0))
    )


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _require_custom_density(model: LevyModel) -> Callable[[np.ndarray], np.ndarray]:
    if model.radial_density is None:
        raise UnsupportedModelError("family 'custom' needs a radial_density for its Lévy measure")
    return model.radial_density


def radial_coefficient(model: LevyModel) -> float:
    """Coefficient c in front of |y|^{-d-α} for the stable-type radial families."""
    if model.family == LevyFamily.RELATIVISTIC_STABLE:
        return model.scale / stable_symbol_constant(model.dim, model.alpha)
    return model.scale


def radial_tilt(model: LevyModel, r: np.ndarray) -> np.ndarray:
    """tilt(r) in [0, 1] relative to the stable density c·r^{-d-α}."""
    r = np.asarray(r, dtype=float)
    family = model.family
    if family == LevyFamily.ISOTROPIC_STABLE:
        return np.ones_like(r)
    if family == LevyFamily.TEMPERED_STABLE:
        return np.exp(-r)
    if family == LevyFamily.TRUNCATED_STABLE:
        return (r <= model.trunc_r).astype(float)
    if family == LevyFamily.RELATIVISTIC_STABLE:
        order = (model.dim + model.alpha) / 2.0
        z = model.m ** (1.0 / model.alpha) * r
        with np.errstate(invalid="ignore", over="ignore"):
            tilt = z ** order * special.kv(order, z) / (2.0 ** (order - 1.0) * math.gamma(order))
        return np.where(z > 0, np.nan_to_num(tilt, nan=0.0), 1.0)
    raise UnsupportedModelError(f"family '{family.value}' has no stable tilt")


def levy_density(model: LevyModel, r: ArrayLike) -> np.ndarray:
    """Lebesgue density of ν at radius r for radial families."""
    r = np.asarray(r, dtype=float)
    if model.family == LevyFamily.CUSTOM:
        return np.asarray(_require_custom_density(model)(r), dtype=float)
    if model.family not in RADIAL_FAMILIES:
        raise UnsupportedModelError(f"family '{model.family.value}' is not radial")
    with np.errstate(divide="ignore"):
        return radial_coefficient(model) * r ** (-model.dim - model.alpha) * radial_tilt(model, r)


def radial_mass_density(model: LevyModel, r: ArrayLike) -> np.ndarray:
    """Density of |Y| under ν, i.e. ω_{d-1} r^{d-1} times the Lebesgue density."""
    r = np.asarray(r, dtype=float)
    return sphere_area(model.dim) * r ** (model.dim - 1) * levy_density(model, r)


def _quad(func: Callable[[float], float], a: float, b: float, **kwargs) -> float:
    value, _ = integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, **kwargs)
    return float(value)


def _support_radius(model: LevyModel) -> float:
    return model.trunc_r if model.family == LevyFamily.TRUNCATED_STABLE else math.inf


def levy_measure_mass(model: LevyModel, a: float, b: float = math.inf) -> float:
    """ν({a < |y| ≤ b}) for 0 < a < b."""
    if not 0.0 < a < b:
        raise ParameterError(f"need 0 < a < b, got a={a}, b={b}")
    family = model.family
    if family == LevyFamily.BROWNIAN:
        return 0.0
    if family == LevyFamily.COMPOUND_POISSON:
        law = stats.chi(model.dim)
        return model.scale * float(law.cdf(b) - law.cdf(a))
    if family == LevyFamily.SINGULAR_STABLE:
        alpha = model.alpha
        return model.dim * 2.0 * model.scale * (a ** -alpha - b ** -alpha) / alpha
    if family in (LevyFamily.ISOTROPIC_STABLE, LevyFamily.TRUNCATED_STABLE):
        b = min(b, _support_radius(model))
        if b <= a:
            return 0.0
        alpha = model.alpha
        return radial_coefficient(model) * sphere_area(model.dim) * (a ** -alpha - b ** -alpha) / alpha
    return _quad(lambda r: float(radial_mass_density(model, r)), a, min(b, _support_radius(model)))


def small_jump_covariance(model: LevyModel, epsilon: float) -> np.ndarray:
    """∫_{|y|≤ε} y yᵀ ν(dy) as a d×d matrix."""
    d = model.dim
    family = model.family
    if family == LevyFamily.BROWNIAN:
        return np.zeros((d, d))
    if family == LevyFamily.COMPOUND_POISSON:
        # E[G Gᵀ; |G| ≤ ε] for G ~ N(0, I_d) is isotropic
        second = _quad(lambda r: r ** 2 * float(stats.chi.pdf(r, d)), 0.0, epsilon)
        return model.scale * second / d * np.eye(d)
    if family == LevyFamily.SINGULAR_STABLE:
        alpha = model.alpha
        return 2.0 * model.scale * epsilon ** (2.0 - alpha) / (2.0 - alpha) * np.eye(d)
    if family == LevyFamily.ISOTROPIC_STABLE or (
        family == LevyFamily.TRUNCATED_STABLE and epsilon <= model.trunc_r
    ):
        alpha = model.alpha
        second = radial_coefficient(model) * sphere_area(d) * epsilon ** (2.0 - alpha) / (2.0 - alpha)
        return second / d * np.eye(d)
    upper = min(epsilon, _support_radius(model))
    second = _quad(lambda r: r ** 2 * float(radial_mass_density(model, r)), 0.0, upper)
    return second / d * np.eye(d)


def _sphere_average_cos(d: int, z: float) -> float:
    """Average of cos(z ξ₁) over the uniform measure on S^{d-1}."""
    if z == 0.0:
        return 1.0
    if d == 1:
        return math.cos(z)
    if d == 3:
        return math.sin(z) / z
    nu = d / 2.0 - 1.0
    return math.gamma(d / 2.0) * (2.0 / z) ** nu * float(special.jv(nu, z))


def _oscillatory_tail(model: LevyModel, k: float, lower: float, upper: float) -> float:
    """∫_lower^upper avg_cos(k r) M(r) dr for the radial mass density M."""
    d = model.dim
    mass = lambda r: float(radial_mass_density(model, r))
    if d == 1:
        if math.isinf(upper):
            value, _ = integrate.quad(mass, lower, upper, weight="cos", wvar=k, epsabs=QUAD_EPSABS, limlst=200)
            return float(value)
        return _quad(mass, lower, upper, weight="cos", wvar=k)
    if d == 3:
        scaled = lambda r: mass(r) / (k * r)
        if math.isinf(upper):
            value, _ = integrate.quad(scaled, lower, upper, weight="sin", wvar=k, epsabs=QUAD_EPSABS, limlst=200)
            return float(value)
        return _quad(scaled, lower, upper, weight="sin", wvar=k)

    # General dimension: sum half-period chunks until the remaining mass is negligible
    chunk = math.pi / k
    total = 0.0
    a = lower
    for _ in range(200_000):
        b = min(a + chunk, upper)
        total += _quad(lambda r: _sphere_average_cos(d, k * r) * mass(r), a, b)
        if b >= upper:
            return total
        remaining = _quad(mass, b, upper) if math.isinf(upper) else _quad(mass, b, upper)
        if remaining < QUAD_EPSREL * max(abs(total), QUAD_EPSABS):
            return total
        a = b
    raise NumericError(f"oscillatory quadrature did not settle for |h|={k} in dimension {d}")


def exponent_quadrature(model: LevyModel, h: ArrayLike) -> float:
    """Jump part of ψ(h) for a radial family by radial quadrature of the Lévy integral.

    ψ(h) = ∫_0^∞ (1 - avg_cos(|h| r)) M(r) dr, split at δ = min(1/|h|, R) into a
    smooth piece near the origin and an oscillatory tail.
    """
    if model.family not in RADIAL_FAMILIES:
        raise UnsupportedModelError(f"radial quadrature needs a radial family, got '{model.family.value}'")
    if model.family == LevyFamily.CUSTOM:
        _require_custom_density(model)
    k = float(np.linalg.norm(np.atleast_1d(np.asarray(h, dtype=float))))
    if k == 0.0:
        return 0.0
    d = model.dim
    upper = _support_radius(model)
    delta = min(1.0 / k, upper)
    near = _quad(lambda r: (1.0 - _sphere_average_cos(d, k * r)) * float(radial_mass_density(model, r)), 0.0, delta)
    if delta >= upper:
        return near
    smooth = _quad(lambda r: float(radial_mass_density(model, r)), delta, upper)
    return near + smooth - _oscillatory_tail(model, k, delta, upper)


def jump_exponent(model: LevyModel, h: ArrayLike) -> float:
    """Jump part of ψ(h); closed form where one exists."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.shape != (model.dim,):
        raise ParameterError(f"h must have shape ({model.dim},), got {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ParameterError("h must be finite")
    family = model.family
    norm = float(np.linalg.norm(h))
    if family == LevyFamily.BROWNIAN:
        return 0.0
    if family == LevyFamily.COMPOUND_POISSON:
        return model.scale * (1.0 - math.exp(-0.5 * norm ** 2))
    if family == LevyFamily.ISOTROPIC_STABLE:
        return model.scale * stable_symbol_constant(model.dim, model.alpha) * norm ** model.alpha
    if family == LevyFamily.SINGULAR_STABLE:
        coefficient = model.scale * stable_symbol_constant(1, model.alpha)
        return coefficient * float(np.sum(np.abs(h) ** model.alpha))
    if family == LevyFamily.RELATIVISTIC_STABLE:
        alpha, m = model.alpha, model.m
        return model.scale * ((norm ** 2 + m ** (2.0 / alpha)) ** (alpha / 2.0) - m)
    return exponent_quadrature(model, h)


def exponent(model: LevyModel, h: ArrayLike) -> complex:
    """Characteristic exponent ψ(h) with E exp(i⟨h, L_t⟩) = exp(-tψ(h)).

    Every catalog family is symmetric, so the value is real.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    gaussian = 0.5 * float(h @ model.q @ h) if h.shape == (model.dim,) else 0.0
    return complex(gaussian + jump_exponent(model, h), 0.0)


def symbol_growth_exponent(model: LevyModel, lo: float = 10.0, hi: float = 1e4, n: int = 16) -> float:
    """Slope of log Re ψ₁ against log|h| on a log grid along the first axis."""
    radii = np.geomspace(lo, hi, n)
    direction = np.zeros(model.dim)
    direction[0] = 1.0
    values = np.array([jump_exponent(model, r * direction) for r in radii])
    if np.any(values <= 0):
        raise NumericError("non-positive symbol on the growth grid")
    slope, _ = np.polyfit(np.log(radii), np.log(values), 1)
    return float(slope)


def _log_integral(func: Callable[[float], float], lo: float, hi: float) -> float:
    """∫_lo^hi func(r) dr computed in the variable u = log r."""
    return _quad(lambda u: func(math.exp(u)) * math.exp(u), math.log(lo), math.log(hi))


def _converges_at_zero(model: LevyModel, sigma: float) -> bool:
    """Ratio test for ∫_{|y|≤1}|y|^σ ν(dy): for a power law the ratio equals ε^{σ-α₀}."""
    eps1, eps2 = CONVERGENCE_PROBE, CONVERGENCE_PROBE ** 2
    integrand = lambda r: r ** sigma * float(radial_mass_density(model, r))
    head = _log_integral(integrand, eps1, 1.0)
    if head <= 0.0:
        return True
    tail = _log_integral(integrand, eps2, eps1)
    return tail / head < 1.0


def bg_index(model: LevyModel) -> float:
    """Blumenthal–Getoor index inf{σ > 0 : ∫_{|y|≤1}|y|^σ ν(dy) < ∞}."""
    family = model.family
    if family in (LevyFamily.BROWNIAN, LevyFamily.COMPOUND_POISSON):
        return 0.0
    if family != LevyFamily.CUSTOM:
        return float(model.alpha)
    _require_custom_density(model)
    lo, hi = 0.0, 2.0
    while hi - lo > BG_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if _converges_at_zero(model, mid):
            hi = mid
        else:
            lo = mid
    logger.debug("bisected Blumenthal-Getoor index %.4f", hi)
    return hi


def _custom_moment(model: LevyModel, theta: float) -> MomentCert:
    integrand = lambda r: r ** theta * float(radial_mass_density(model, r))
    r1, r2 = 1.0 / CONVERGENCE_PROBE, 1.0 / CONVERGENCE_PROBE ** 2
    head = _log_integral(integrand, 1.0, r1)
    tail = _log_integral(integrand, r1, r2)
    if head <= 0.0 or tail / head < 1.0:
        return MomentCert(theta=theta, finite=True, integral_estimate=head + tail)
    return MomentCert(theta=theta, finite=False, integral_estimate=math.inf)


def moment_check(model: LevyModel, theta: float) -> MomentCert:
    """Certify whether ∫_{|x|>1}|x|^θ ν(dx) is finite, with an estimate of the integral."""
    if theta <= 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    family = model.family
    if family == LevyFamily.BROWNIAN:
        return MomentCert(theta=theta, finite=True, integral_estimate=0.0)
    if family == LevyFamily.COMPOUND_POISSON:
        estimate = model.scale * _quad(lambda r: r ** theta * float(stats.chi.pdf(r, model.dim)), 1.0, math.inf)
        return MomentCert(theta=theta, finite=True, integral_estimate=estimate)
    if family == LevyFamily.CUSTOM:
        _require_custom_density(model)
        return _custom_moment(model, theta)

    alpha = model.alpha
    if family in (LevyFamily.ISOTROPIC_STABLE, LevyFamily.SINGULAR_STABLE):
        if theta >= alpha:
            return MomentCert(theta=theta, finite=False, integral_estimate=math.inf)
        if family == LevyFamily.SINGULAR_STABLE:
            return MomentCert(theta=theta, finite=True, integral_estimate=model.dim * 2.0 * model.scale / (alpha - theta))
        estimate = radial_coefficient(model) * sphere_area(model.dim) / (alpha - theta)
        return MomentCert(theta=theta, finite=True, integral_estimate=estimate)
    if family == LevyFamily.TRUNCATED_STABLE:
        radius = model.trunc_r
        if radius <= 1.0:
            return MomentCert(theta=theta, finite=True, integral_estimate=0.0)
        power = theta - alpha
        radial = math.log(radius) if power == 0 else (radius ** power - 1.0) / power
        return MomentCert(theta=theta, finite=True, integral_estimate=model.scale * sphere_area(model.dim) * radial)
    # tempered and relativistic measures decay exponentially
    estimate = _quad(lambda r: r ** theta * float(radial_mass_density(model, r)), 1.0, math.inf)
    return MomentCert(theta=theta, finite=True, integral_estimate=estimate)


def tempered_exponent_1d(alpha: float, scale: float, h: float) -> float:
    """Closed form of ψ for ν(dy) = scale·e^{-|y|}|y|^{-1-α}dy in d = 1, α ≠ 1."""
    if alpha == 1.0:
        raise ParameterError("closed form excludes alpha = 1")
    return -2.0 * scale * math.gamma(-alpha) * (
        (1.0 + h * h) ** (alpha / 2.0) * math.cos(alpha * math.atan(h)) - 1.0
    )
