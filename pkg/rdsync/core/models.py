from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from rdsync.core.enums import Command, ConditionKind, FieldKind, Scheme, Verdict


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------- Config blocks ----------


class BuiltinSpec(_Strict):
    kind: FieldKind
    dim: Optional[int] = Field(default=None, ge=1)
    params: Dict[str, Any] = Field(default_factory=dict)
    expr: Optional[List[str]] = None
    potential: Optional[str] = None
    one_sided_constant: Optional[float] = None
    name: Optional[str] = None


class IntegratorSpec(_Strict):
    scheme: Scheme = Scheme.TAMED_EULER
    dt: float = Field(default=1e-3, gt=0.0)
    newton_tol: float = Field(default=1e-12, gt=0.0)
    newton_max_iter: int = Field(default=50, ge=1)


class NoiseConfig(_Strict):
    seed: int = 0
    delta: float = Field(default=1e-3, gt=0.0)
    window: Optional[Tuple[float, float]] = None
    seeds: Optional[List[int]] = None
    n_seeds: int = Field(default=1, ge=0)


class RunBlock(_Strict):
    sigma: float = Field(default=1.0, ge=0.0)
    t0: float = 0.0
    t1: float = 1.0
    x0: List[List[float]] = Field(default_factory=list)
    record_every: int = Field(default=1, ge=1)


class LyapunovBlock(_Strict):
    k: Optional[int] = Field(default=None, ge=1)
    T: float = Field(default=200.0, gt=0.0)
    burn_in: Optional[float] = Field(default=None, ge=0.0)
    qr_every: int = Field(default=10, ge=1)
    method: Literal["benettin", "twopoint"] = "benettin"
    delta0: float = Field(default=1e-8, gt=0.0)
    renorm_threshold: float = Field(default=10.0, gt=1.0)


class GibbsBlock(_Strict):
    box: Optional[Tuple[float, float]] = None
    N: Optional[int] = Field(default=None, ge=5)
    ball_radii: List[float] = Field(default_factory=lambda: [1.0, 2.0])
    density_csv: bool = True


class SyncBlock(_Strict):
    x: List[float] = Field(default_factory=list)
    y: List[float] = Field(default_factory=list)
    T: float = Field(default=100.0, gt=0.0)
    checkpoints: List[float] = Field(default_factory=list)
    epsilon: float = Field(default=0.05, gt=0.0)


class DiamBlock(_Strict):
    center: List[float] = Field(default_factory=list)
    radius: float = Field(default=1.0, gt=0.0)
    mesh_n: int = Field(default=32, ge=1)
    T: float = Field(default=100.0, gt=0.0)
    checkpoints: List[float] = Field(default_factory=list)
    epsilon: float = Field(default=0.05, gt=0.0)


class PullbackBlock(_Strict):
    init: List[List[float]] = Field(default_factory=list)
    n_init: int = Field(default=0, ge=0)
    t_list: List[float] = Field(default_factory=lambda: [0.0, 10.0])
    linkage_epsilon: Optional[float] = Field(default=None, gt=0.0)


class CheckBlock(_Strict):
    box: Tuple[float, float] = (-3.0, 3.0)
    n_pairs: int = Field(default=100_000, ge=1)
    R: Optional[float] = Field(default=None, gt=0.0)
    r: Optional[float] = Field(default=None, gt=0.0)
    z_candidates: List[List[float]] = Field(default_factory=list)
    v: List[List[float]] = Field(default_factory=list)
    z_grid: List[List[float]] = Field(default_factory=list)
    minima: List[List[float]] = Field(default_factory=list)


class ControlBlock(_Strict):
    x: List[float] = Field(default_factory=list)
    r: float = Field(default=0.1, gt=0.0)
    z: List[float] = Field(default_factory=list)
    t0: Optional[float] = Field(default=None, gt=0.0)
    delta: float = Field(default=0.1, gt=0.0)
    mesh_n: int = Field(default=32, ge=1)
    n_steps: int = Field(default=400, ge=2)
    contraction_z: Optional[List[float]] = None
    contraction_R: float = Field(default=1.0, gt=0.0)


class SuiteBlock(_Strict):
    scale: Literal["full", "quick"] = "full"
    only: List[str] = Field(default_factory=list)


class ExperimentConfig(_Strict):
    command: Command
    field: Optional[BuiltinSpec] = None
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    integrator: IntegratorSpec = Field(default_factory=IntegratorSpec)
    run: RunBlock = Field(default_factory=RunBlock)
    lyapunov: LyapunovBlock = Field(default_factory=LyapunovBlock)
    gibbs: GibbsBlock = Field(default_factory=GibbsBlock)
    sync: SyncBlock = Field(default_factory=SyncBlock)
    diam: DiamBlock = Field(default_factory=DiamBlock)
    pullback: PullbackBlock = Field(default_factory=PullbackBlock)
    check: CheckBlock = Field(default_factory=CheckBlock)
    control: ControlBlock = Field(default_factory=ControlBlock)
    suite: SuiteBlock = Field(default_factory=SuiteBlock)
    output_dir: str = "runs/latest"
    n_workers: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _dt_matches_delta(self) -> "ExperimentConfig":
        if "dt" not in self.integrator.model_fields_set:
            self.integrator = self.integrator.model_copy(update={"dt": self.noise.delta})
        return self


# ---------- Reports ----------


class LyapunovSpectrum(BaseModel):
    exponents: List[float]
    block_std_errors: List[float]
    T_effective: float
    dt: float
    seed: Optional[int] = None
    x0: List[float] = Field(default_factory=list)
    n_replicas: int = 1
    # rows of [t, running exponents...] for convergence CSVs
    running: List[List[float]] = Field(default_factory=list, exclude=True)

    @property
    def top(self) -> float:
        return self.exponents[0]

    @property
    def top_std_error(self) -> float:
        return self.block_std_errors[0]


class TwoPointExponent(BaseModel):
    exponent: float
    std_error: float
    epochs: int
    T_effective: float


class QuantileRow(BaseModel):
    q05: float
    q25: float
    q50: float
    q75: float
    q95: float
    max: float
    min: float


class ExceedRow(BaseModel):
    p: float = Field(ge=0.0, le=1.0)
    ci_low: float = Field(ge=0.0, le=1.0)
    ci_high: float = Field(ge=0.0, le=1.0)


class SyncReport(BaseModel):
    statistic: str
    checkpoints: List[float]
    distance_quantiles: List[QuantileRow]
    exceed_prob: List[ExceedRow]
    ensemble_size: int
    n_exploded: int = 0
    epsilon: float
    config_hash: Optional[str] = None
    final_fraction_below: Optional[float] = None
    # seed -> "ErrorType: message" for seeds dropped from the ensemble
    seed_failures: Dict[str, str] = Field(default_factory=dict)


class ConditionReport(BaseModel):
    kind: ConditionKind
    verdict: Verdict
    witness: Dict[str, Any] = Field(default_factory=dict)
    samples_used: int = 0
    notes: List[str] = Field(default_factory=list)


class ClusterReport(BaseModel):
    points: List[List[float]]
    linkage_epsilon: float
    metric: Literal["euclidean", "arc"] = "euclidean"
    cluster_count: int
    cluster_centers: List[List[float]]
    cluster_sizes: List[int]
    max_intra_cluster_diameter: float


class SwiftControlReport(BaseModel):
    times: List[float]
    control: List[List[float]]
    residual: float
    t0: float
    t0_bound: float
    drift_bound: float
    dt: float
    landing_errors: List[float]
    all_landed: bool


class ContractionWitnessReport(BaseModel):
    T0: float
    ratio: float
    c_estimate: float
    mesh_n: int
    witness_ok: bool


class CriterionResult(BaseModel):
    id: str
    title: str
    passed: bool
    metrics: Dict[str, Any] = Field(default_factory=dict)
    failed_checks: List[str] = Field(default_factory=list)
    error: Optional[str] = None
    duration_s: float = 0.0


class RunManifest(BaseModel):
    config: Dict[str, Any]
    config_hash: str
    seeds: List[int]
    toolkit_version: str
    started_at: str
    wall_clock_s: float
    outputs: Dict[str, str] = Field(default_factory=dict)
    seed_failures: Dict[str, str] = Field(default_factory=dict)
    exit_code: int = 0


class QuadratureEstimate(BaseModel):
    value: float
    error: float = Field(ge=0.0)
    method: Literal["tensor_trapezoid", "polar", "monte_carlo"] = "tensor_trapezoid"


class LogMomentReport(BaseModel):
    """Empirical E log+ |D phi_1|; the integrability hypothesis itself is assumed, not verified."""

    mean: float
    std_error: float
    n_windows: int
    status: Literal["assumed"] = "assumed"
