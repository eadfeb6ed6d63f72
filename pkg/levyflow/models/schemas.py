from enum import Enum
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple
from datetime import datetime, timezone
import hashlib

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from levyflow.core.config import settings

MAX_DIM = 8

# Levy model schemas
class LevyFamily(str, Enum):
    ISOTROPIC_STABLE = "isotropic_stable"
    SINGULAR_STABLE = "singular_stable"
    TEMPERED_STABLE = "tempered_stable"
    TRUNCATED_STABLE = "truncated_stable"
    RELATIVISTIC_STABLE = "relativistic_stable"
    BROWNIAN = "brownian"
    COMPOUND_POISSON = "compound_poisson"
    CUSTOM = "custom"


STABLE_TYPE_FAMILIES = frozenset({
    LevyFamily.ISOTROPIC_STABLE,
    LevyFamily.SINGULAR_STABLE,
    LevyFamily.TEMPERED_STABLE,
    LevyFamily.TRUNCATED_STABLE,
    LevyFamily.RELATIVISTIC_STABLE,
})

# Families whose Levy measure is rotation invariant with a density in |y|
RADIAL_FAMILIES = frozenset({
    LevyFamily.ISOTROPIC_STABLE,
    LevyFamily.TEMPERED_STABLE,
    LevyFamily.TRUNCATED_STABLE,
    LevyFamily.RELATIVISTIC_STABLE,
    LevyFamily.CUSTOM,
})


class LevyModel(BaseModel):
    """A Lévy process given by its generating triplet (Q, ν, 0).

    Stable-type measures are parameterised as ν(dy) = scale·|y|^{-d-α}·tilt(|y|) dy;
    the relativistic family is parameterised by its exponent instead.
    """

    family: LevyFamily
    dim: int = Field(default=1, ge=1, le=MAX_DIM)
    alpha: Optional[float] = None
    scale: float = Field(default=1.0, gt=0)
    m: float = Field(default=1.0, gt=0)
    trunc_r: float = Field(default=1.0, gt=0)
    q_diag: Optional[List[float]] = None
    q_matrix: Optional[List[List[float]]] = None
    # custom hook: Lebesgue density of ν as a function of r = |y|
    radial_density: Optional[Callable[[np.ndarray], np.ndarray]] = Field(default=None, exclude=True)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, use_enum_values=False)

    @model_validator(mode="after")
    def check_triplet(self) -> "LevyModel":
        if self.family in STABLE_TYPE_FAMILIES:
            if self.alpha is None:
                raise ValueError(f"missing key 'alpha' for family '{self.family.value}'")
            if not 0.0 < self.alpha < 2.0:
                raise ValueError(f"alpha must lie in (0, 2) for family '{self.family.value}', got {self.alpha}")
        elif self.family == LevyFamily.CUSTOM and self.alpha is not None and not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.q_diag is not None and self.q_matrix is not None:
            raise ValueError("give either 'q_diag' or 'q_matrix', not both")
        q = self.q
        if q.shape != (self.dim, self.dim):
            raise ValueError(f"Gaussian covariance must be {self.dim}x{self.dim}, got {q.shape}")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("Gaussian covariance must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-12:
            raise ValueError("Gaussian covariance must be non-negative definite")
        return self

    @property
    def q(self) -> np.ndarray:
        if self.q_matrix is not None:
            return np.asarray(self.q_matrix, dtype=float)
        if self.q_diag is not None:
            return np.diag(np.asarray(self.q_diag, dtype=float))
        if self.family == LevyFamily.BROWNIAN:
            return np.eye(self.dim)
        return np.zeros((self.dim, self.dim))

    @property
    def model_id(self) -> str:
        payload = self.model_dump_json(exclude={"radial_density"})
        return f"{self.family.value}-{hashlib.blake2b(payload.encode(), digest_size=6).hexdigest()}"


class MomentCert(BaseModel):
    theta: float = Field(gt=0)
    finite: bool
    integral_estimate: float

    @model_validator(mode="after")
    def finite_matches_estimate(self) -> "MomentCert":
        if self.finite != bool(np.isfinite(self.integral_estimate)):
            raise ValueError("finite must agree with integral_estimate")
        return self


# Drift schemas
class DriftKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    SQRT_ABS = "sqrt_abs"
    HOLDER_POWER = "holder_power"
    BUMP = "bump"
    TABULATED = "tabulated"


class DriftSpec(BaseModel):
    """Bounded Hölder drift b(t, x) from the built-in catalog.

    `beta`, `holder_seminorm` and `sup_norm` default to the catalog values; declared
    values are spot-checked on random pairs when the drift is built.
    """

    kind: DriftKind = DriftKind.ZERO
    dim: int = Field(default=1, ge=1, le=MAX_DIM)
    beta: Optional[float] = None
    holder_seminorm: Optional[float] = None
    sup_norm: Optional[float] = None
    time_dependent: bool = False
    clip: float = Field(default_factory=lambda: settings.drift_clip, gt=0)
    matrix: Optional[List[List[float]]] = None
    center: Optional[List[float]] = None
    radius: float = Field(default=1.0, gt=0)
    height: float = 1.0
    table_x: Optional[List[float]] = None
    table_values: Optional[List[float]] = None

    @model_validator(mode="after")
    def fill_holder_data(self) -> "DriftSpec":
        # deferred: drifts imports this module
        from levyflow.services.drifts import catalog_holder_data, spot_check

        beta, seminorm, sup_norm = catalog_holder_data(self)
        if self.beta is None:
            self.beta = beta
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.holder_seminorm is None:
            self.holder_seminorm = seminorm
        if self.sup_norm is None:
            self.sup_norm = sup_norm
        spot_check(self)
        return self

    def evaluate(self, t: Any, x: np.ndarray) -> np.ndarray:
        from levyflow.services.drifts import evaluate_drift

        return evaluate_drift(self, t, x)


class ProbeKind(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    DRIFT_COMPONENT = "drift_component"


class ProbeFunction(BaseModel):
    """Scalar right-hand side f for the resolvent equation."""

    kind: ProbeKind = ProbeKind.CONSTANT
    value: float = 1.0
    k: float = 1.0
    component: int = 0
    drift: Optional[DriftSpec] = None

    @model_validator(mode="after")
    def check_component(self) -> "ProbeFunction":
        if self.kind == ProbeKind.DRIFT_COMPONENT:
            if self.drift is None:
                raise ValueError("drift_component probe needs 'drift'")
            if not 0 <= self.component < self.drift.dim:
                raise ValueError(f"component {self.component} out of range for dim {self.drift.dim}")
        return self

    @property
    def sup_norm(self) -> float:
        if self.kind == ProbeKind.CONSTANT:
            return abs(self.value)
        if self.kind == ProbeKind.COSINE:
            return abs(self.value)
        return float(self.drift.sup_norm)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on points of shape (..., d); returns shape (...)."""
        x = np.asarray(x, dtype=float)
        if self.kind == ProbeKind.CONSTANT:
            return np.full(x.shape[:-1], self.value)
        if self.kind == ProbeKind.COSINE:
            return self.value * np.cos(self.k * x[..., 0])
        return self.drift.evaluate(0.0, x)[..., self.component]


# Experiment configuration schemas
class ExperimentTag(str, Enum):
    SAMPLE = "sample"
    SOLVE = "solve"
    VERIFY_LP = "verify-lp"
    VERIFY_HOLDER = "verify-holder"
    VERIFY_UNIQUENESS = "verify-uniqueness"
    VERIFY_FLOW = "verify-flow"
    VERIFY_CADLAG = "verify-cadlag"
    TANAKA_GRID = "tanaka-grid"
    KOLMOGOROV_GRADIENT = "kolmogorov-gradient"
    KOLMOGOROV_LAMBDA0 = "kolmogorov-lambda0"


class GridConfig(BaseModel):
    t_end: float = Field(default=1.0, gt=0)
    n_steps: int = Field(default_factory=lambda: settings.default_n_steps, ge=1)


class SolverConfig(BaseModel):
    method: Literal["picard", "euler"] = "picard"
    tol: float = Field(default_factory=lambda: settings.default_tol, gt=0)
    max_iter: int = Field(default_factory=lambda: settings.default_max_iter, ge=1)


class SeedConfig(BaseModel):
    master: int = Field(default=0, ge=0, lt=2 ** 64)
    shards: int = Field(default=4, ge=1)


class SamplerConfig(BaseModel):
    method: Literal["exact", "levy_ito"] = "exact"
    epsilon: float = Field(default_factory=lambda: settings.small_jump_epsilon, gt=0, le=1)


class ExperimentParams(BaseModel):
    n_paths: int = Field(default=100, ge=1)
    x: List[float] = [0.0]
    s: float = 0.0
    t: Optional[float] = None
    # verify-lp
    p: float = Field(default=2.0, ge=2.0)
    pair_distances: List[float] = [1.0, 1.0 / 8, 1.0 / 64]
    s_values: List[float] = [0.0, 0.3, 0.7]
    # verify-holder
    box_radius: float = Field(default=1.0, gt=0)
    n_points: int = Field(default=16, ge=2)
    n_grr: int = 16
    # verify-uniqueness / tanaka-grid
    n_starts: int = Field(default=8, ge=2)
    perturbation_scale: float = Field(default=0.5, ge=0)
    alpha_list: List[float] = [0.5, 1.0, 1.5, 2.0]
    beta_list: List[float] = [0.25, 0.5, 0.75]
    # verify-flow
    n_triples: int = Field(default=100, ge=1)
    n_s_nodes: int = Field(default=64, ge=2)
    # verify-cadlag
    k_max: int = Field(default=10, ge=1)
    x_box_points: int = Field(default=5, ge=1)
    # kolmogorov
    t_list: List[float] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
    probes: List[str] = ["step", "bump", "oscillatory"]
    lambda_grid: List[float] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    x_probes: List[float] = [-0.5, 0.0, 0.5]
    horizon: Optional[float] = None
    h_fd: float = Field(default_factory=lambda: settings.h_fd, gt=0)
    tail_tol: float = Field(default_factory=lambda: settings.tail_tol, gt=0)
    resolvent_steps: int = Field(default=256, ge=1)


class Thresholds(BaseModel):
    max_failure_fraction: float = 0.01
    lp_stability_factor: float = 4.0
    holder_slack: float = 0.1
    holder_pass_fraction: float = 0.95
    uniqueness_tol_factor: float = 10.0
    peano_separation: float = 0.1
    flow_constant: float = 10.0
    flow_slope_range: Tuple[float, float] = (0.8, 1.3)
    cadlag_fraction: float = 0.05
    cadlag_pass_fraction: float = 0.95
    gradient_slack_low: float = 0.05
    gradient_slack_high: float = 0.15
    lambda0_threshold: float = 1.0 / 3.0
    lambda0_slope_slack: float = 0.15


class OutputConfig(BaseModel):
    dir: str = Field(default_factory=lambda: settings.output_dir)
    format: Literal["json", "csv", "both"] = Field(default_factory=lambda: settings.report_format)
    archive_paths: bool = False


class ExperimentConfig(BaseModel):
    experiment: ExperimentTag
    model: LevyModel
    drift: DriftSpec = Field(default_factory=DriftSpec)
    grid: GridConfig = Field(default_factory=GridConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    params: ExperimentParams = Field(default_factory=ExperimentParams)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def dims_agree(self) -> "ExperimentConfig":
        if self.drift.dim != self.model.dim:
            raise ValueError(f"drift dim {self.drift.dim} does not match model dim {self.model.dim}")
        if len(self.params.x) != self.model.dim:
            raise ValueError(f"params.x has {len(self.params.x)} entries, model dim is {self.model.dim}")
        return self

    def snapshot(self) -> Dict[str, Any]:
        """Normalized form embedded in every report."""
        return self.model_dump(mode="json")


# Report schema
REPORT_SCHEMA_VERSION = 1


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


class VerificationReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    experiment: str
    n_paths: int = 0
    seeds: List[int] = []
    ratio_max: Optional[float] = None
    fitted_exponent: Optional[float] = None
    residual_max: Optional[float] = None
    passed: bool = Field(default=False, alias="pass")
    failures: int = 0
    statistics: Dict[str, Optional[float]] = {}
    rows: List[Dict[str, Any]] = []
    config_snapshot: Dict[str, Any] = {}
    notes: List[str] = []
    generated_at: str = Field(default_factory=utc_timestamp)

    model_config = ConfigDict(populate_by_name=True)

    @field_validator("ratio_max", "fitted_exponent", "residual_max")
    @classmethod
    def finite_or_none(cls, value: Optional[float]) -> Optional[float]:
        if value is None or not np.isfinite(value):
            return None
        return float(value)

    @field_validator("statistics")
    @classmethod
    def finite_statistics(cls, value: Dict[str, Optional[float]]) -> Dict[str, Optional[float]]:
        return {key: (float(v) if v is not None and np.isfinite(v) else None) for key, v in value.items()}
