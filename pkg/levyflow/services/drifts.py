"""Catalog drifts: evaluation and Hölder data.

Every catalog drift is clipped at radius `clip` so that sup_norm is finite.
"""
import logging
from typing import Any, Tuple

import numpy as np

from levyflow.core.errors import DriftSpecError, NumericError

logger = logging.getLogger(__name__)

SPOT_CHECK_PAIRS = 1000
SPOT_CHECK_BOX = 3.0


def _time_factor(spec, t: Any) -> Any:
    if not spec.time_dependent:
        return 1.0
    return np.cos(2.0 * np.pi * np.asarray(t, dtype=float))


def _row_norm(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Euclidean norm of the last axis as (peak, norm / peak); no overflow for huge entries."""
    peak = np.max(np.abs(x), axis=-1, keepdims=True)
    safe = np.where(peak > 0, peak, 1.0)
    relative = np.linalg.norm(x / safe, axis=-1, keepdims=True)
    return peak, np.where(peak > 0, relative, 1.0)


def _project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    peak, relative = _row_norm(x)
    factor = np.minimum(1.0, radius / np.where(peak > 0, peak, 1.0) / relative)
    return x * factor


def evaluate_drift(spec, t: Any, x: np.ndarray) -> np.ndarray:
    """Evaluate b(t, x) for x of shape (..., d)."""
    from levyflow.models.schemas import DriftKind

    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise DriftSpecError(f"drift of dim {spec.dim} evaluated on points of dim {x.shape[-1]}")
    kind = spec.kind
    if kind == DriftKind.ZERO:
        value = np.zeros_like(x)
    elif kind == DriftKind.LINEAR:
        value = _project_ball(x, spec.clip) @ np.asarray(spec.matrix, dtype=float).T
    elif kind == DriftKind.SQRT_ABS:
        value = np.sqrt(np.minimum(np.abs(x), spec.clip))
    elif kind == DriftKind.HOLDER_POWER:
        value = np.sign(x) * np.minimum(np.abs(x), spec.clip) ** spec.beta
    elif kind == DriftKind.BUMP:
        center = np.asarray(spec.center if spec.center is not None else np.zeros(spec.dim), dtype=float)
        peak, relative = _row_norm(x - center)
        dist = np.minimum(peak, spec.radius) * relative
        profile = np.maximum(0.0, 1.0 - dist / spec.radius) ** spec.beta
        value = spec.height * np.broadcast_to(profile, x.shape)
    elif kind == DriftKind.TABULATED:
        value = np.interp(x, spec.table_x, spec.table_values)
    else:
        raise DriftSpecError(f"unknown drift kind {kind}")

    value = value * _time_factor(spec, t) if spec.time_dependent else value
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite drift value for kind '{kind.value}'")
    return value


def catalog_holder_data(spec) -> Tuple[float, float, float]:
    """Return (beta, [b]_beta, ||b||_0) implied by the catalog kind."""
    from levyflow.models.schemas import DriftKind

    d = spec.dim
    kind = spec.kind
    if kind == DriftKind.ZERO:
        return (spec.beta or 1.0, 0.0, 0.0)
    if kind == DriftKind.LINEAR:
        if spec.matrix is None:
            raise DriftSpecError("linear drift needs 'matrix'")
        matrix = np.asarray(spec.matrix, dtype=float)
        if matrix.shape != (d, d):
            raise DriftSpecError(f"linear drift matrix must be {d}x{d}, got {matrix.shape}")
        norm = float(np.linalg.norm(matrix, 2))
        return (1.0, norm, norm * spec.clip)
    if kind == DriftKind.SQRT_ABS:
        if d != 1:
            raise DriftSpecError("sqrt_abs drift is one-dimensional")
        return (0.5, 1.0, float(np.sqrt(spec.clip)))
    if kind == DriftKind.HOLDER_POWER:
        if spec.beta is None:
            raise DriftSpecError("holder_power drift needs 'beta'")
        beta = spec.beta
        return (beta, 2.0 ** (1.0 - beta) * d ** ((1.0 - beta) / 2.0), float(np.sqrt(d) * spec.clip ** beta))
    if kind == DriftKind.BUMP:
        beta = spec.beta or 1.0
        if spec.center is not None and len(spec.center) != d:
            raise DriftSpecError(f"bump center must have {d} entries")
        height = abs(spec.height)
        return (beta, height * np.sqrt(d) / spec.radius ** beta, height * np.sqrt(d))
    if kind == DriftKind.TABULATED:
        if d != 1:
            raise DriftSpecError("tabulated drift is one-dimensional")
        if spec.table_x is None or spec.table_values is None or len(spec.table_x) != len(spec.table_values):
            raise DriftSpecError("tabulated drift needs table_x and table_values of equal length")
        xs = np.asarray(spec.table_x, dtype=float)
        vs = np.asarray(spec.table_values, dtype=float)
        if len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise DriftSpecError("table_x must be strictly increasing with at least two nodes")
        return (1.0, float(np.max(np.abs(np.diff(vs) / np.diff(xs)))), float(np.max(np.abs(vs))))
    raise DriftSpecError(f"unknown drift kind {kind}")


def spot_check(spec, n_pairs: int = SPOT_CHECK_PAIRS) -> None:
    """Check the declared bounds on random pairs; raises DriftSpecError on a violation."""
    rng = np.random.default_rng(20240501)
    x = rng.uniform(-SPOT_CHECK_BOX, SPOT_CHECK_BOX, size=(n_pairs, spec.dim))
    scales = 10.0 ** rng.uniform(-6, 0.5, size=(n_pairs, 1))
    y = x + scales * rng.standard_normal((n_pairs, spec.dim))
    t = rng.uniform(0.0, 1.0, size=(n_pairs, 1))
    bx = evaluate_drift(spec, t, x)
    by = evaluate_drift(spec, t, y)

    sup_slack = 1e-9 * max(1.0, spec.sup_norm)
    if np.max(np.linalg.norm(bx, axis=-1)) > spec.sup_norm + sup_slack:
        raise DriftSpecError(f"drift exceeds declared sup_norm {spec.sup_norm}")
    lhs = np.linalg.norm(bx - by, axis=-1)
    rhs = spec.holder_seminorm * np.linalg.norm(x - y, axis=-1) ** spec.beta
    if np.any(lhs > rhs * (1.0 + 1e-9) + 1e-12):
        worst = int(np.argmax(lhs - rhs))
        raise DriftSpecError(
            f"Hölder bound violated: |b(x)-b(y)| = {lhs[worst]:.3e} > {rhs[worst]:.3e} "
            f"(beta={spec.beta}, seminorm={spec.holder_seminorm})"
        )
    logger.debug("drift %s passed %d-pair Hölder spot check", spec.kind.value, n_pairs)
