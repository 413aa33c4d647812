"""Request/response models for the HTTP service.

Matrices travel as row-major nested lists of floats.  JSON cannot carry
``nan``/``inf``, so every float that can legitimately be non-finite (failed
grid points, infeasible baselines, unbounded attempt counts) is declared
optional and serialized as ``null``; the accompanying ``status`` string says
why.  Study outputs are returned as the CSV text the harness would write to
disk — CSV is the canonical artifact format and keeps non-finite cells
representable.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer

from kalsel.concentration import AwParameters, CovarianceBounds
from kalsel.greedy import GreedyResult
from kalsel.optimizer import (
    GridPoint,
    GridSearchResult,
    HeterogeneousSearchResult,
    UniformBaselineResult,
)
from kalsel.system import (
    DetectabilityReport,
    LtiSystem,
    Partitioning,
    Selection,
    SensorPool,
)

Matrix = list[list[float]]
Vector = list[float]


def finite_or_none(value: float) -> float | None:
    """Map non-finite floats to ``None`` so payloads stay valid JSON."""
    v = float(value)
    return v if math.isfinite(v) else None


class StrictModel(BaseModel):
    """Base with unknown-field rejection, so typos fail loudly at the edge."""

    model_config = ConfigDict(extra="forbid")


class SystemModel(StrictModel):
    """Discrete-time plant: dynamics matrix and process-noise covariance."""

    dynamics: Matrix
    process_noise: Matrix

    def to_system(self) -> LtiSystem:
        return LtiSystem(A=np.asarray(self.dynamics), Q=np.asarray(self.process_noise))

    @classmethod
    def from_system(cls, system: LtiSystem) -> "SystemModel":
        return cls(dynamics=system.A.tolist(), process_noise=system.Q.tolist())


class PoolModel(StrictModel):
    """Candidate pool: one measurement row and noise variance per sensor."""

    rows: Matrix
    variances: Vector

    def to_pool(self) -> SensorPool:
        return SensorPool.from_arrays(np.asarray(self.rows), self.variances)

    @classmethod
    def from_pool(cls, pool: SensorPool) -> "PoolModel":
        return cls(rows=pool.rows.tolist(), variances=pool.variances.tolist())


class PartitioningModel(StrictModel):
    """Contiguous candidate split with per-group draw counts and budgets."""

    candidate_counts: list[int]
    sample_counts: list[int]
    confidences: Vector

    def to_partitioning(self) -> Partitioning:
        return Partitioning(
            candidate_counts=tuple(self.candidate_counts),
            sample_counts=tuple(self.sample_counts),
            confidences=tuple(self.confidences),
        )


class ParametersModel(StrictModel):
    """Concentration certificate: sample count, budgets, and sampling law."""

    sample_size: int
    delta: float
    epsilon: float
    rho: float
    c0: float
    distribution: Vector

    def to_params(self) -> AwParameters:
        return AwParameters(
            sample_size=self.sample_size,
            delta=self.delta,
            epsilon=self.epsilon,
            rho=self.rho,
            c0=self.c0,
            distribution=np.asarray(self.distribution),
        )

    @classmethod
    def from_params(cls, params: AwParameters) -> "ParametersModel":
        return cls(
            sample_size=params.sample_size,
            delta=params.delta,
            epsilon=params.epsilon,
            rho=params.rho,
            c0=params.c0,
            distribution=params.distribution.tolist(),
        )


class BoundsModel(StrictModel):
    """Loewner sandwich with its probability floor and worst-case eigenvalue."""

    lower: Matrix
    upper: Matrix
    probability_floor: float
    scope: str
    worst_case: float

    @classmethod
    def from_bounds(cls, bounds: CovarianceBounds) -> "BoundsModel":
        return cls(
            lower=bounds.L.tolist(),
            upper=bounds.U.tolist(),
            probability_floor=bounds.probability_floor,
            scope=bounds.scope,
            worst_case=bounds.worst_case,
        )


class SelectionModel(StrictModel):
    """Drawn selection: 1-based candidate indices plus bookkeeping."""

    indices: list[int]
    kind: str
    attempts: int | None = None
    variates_consumed: int | None = None

    @classmethod
    def from_selection(
        cls,
        sel: Selection,
        *,
        attempts: int | None = None,
        variates_consumed: int | None = None,
    ) -> "SelectionModel":
        return cls(
            indices=list(sel.indices),
            kind=sel.kind,
            attempts=attempts,
            variates_consumed=variates_consumed,
        )


# ---------------------------------------------------------------------------
# requests


class GenerateRequest(StrictModel):
    m: int
    n_c: int
    seed: int
    stream: int = 0
    sigma2: float = 0.5
    q_scale: float = 0.5
    spectral_radius: float | None = None


class InstanceRequest(StrictModel):
    """Common payload for endpoints that act on a plant plus pool."""

    system: SystemModel
    pool: PoolModel


class DetectabilityRequest(InstanceRequest):
    distribution: Vector


class PoolOnlyRequest(StrictModel):
    pool: PoolModel


class SampleSizeRequest(StrictModel):
    pool: PoolModel
    delta: float
    distribution: Vector | None = None
    margin: int = 0
    epsilon: float | None = None


class ParametersRequest(StrictModel):
    pool: PoolModel
    sample_size: int
    delta: float
    distribution: Vector | None = None
    epsilon: float | None = None


class TimeBoundsRequest(StrictModel):
    """Finite-horizon sandwich; the prior covariance may be given directly or
    produced by open-loop warm-up from the identity."""

    pool: PoolModel
    parameters: ParametersModel
    sigma: Matrix | None = None
    system: SystemModel | None = None
    warmup: int = 0


class SteadyBoundsRequest(InstanceRequest):
    parameters: ParametersModel


class HeterogeneousBoundsRequest(InstanceRequest):
    partitioning: PartitioningModel
    parameters: list[ParametersModel]


class GridSearchRequest(InstanceRequest):
    sample_size: int
    delta: float
    n_p: int
    mode: str = "steady-state"
    sigma: Matrix | None = None
    warmup: int = 0
    workers: int = 1


class HeterogeneousSearchRequest(InstanceRequest):
    partitioning: PartitioningModel
    n_p: int
    workers: int = 1


class UniformBaselineRequest(InstanceRequest):
    sample_size: int
    delta: float


class HomogeneousDrawRequest(StrictModel):
    distribution: Vector
    sample_size: int
    seed: int
    stream: int = 0


class ConstrainedDrawRequest(HomogeneousDrawRequest):
    caps: list[int] | None = None
    uniform_factor: int | None = None
    max_attempts: int | None = None


class HeterogeneousDrawRequest(StrictModel):
    partitioning: PartitioningModel
    distributions: list[Vector]
    seed: int
    stream: int = 0


class AlphaRequest(StrictModel):
    sample_size: int
    distribution: Vector
    delta: float
    caps: list[int] | None = None
    uniform_factor: int | None = None


class GreedyRequest(InstanceRequest):
    sample_size: int
    gamma: float = 1.0
    seed: int | None = None
    stream: int = 0
    workers: int = 1


class StudyRequest(StrictModel):
    """Experiment-harness run; the config uses the documented key=value keys."""

    config: dict[str, str] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# responses


class HealthResponse(StrictModel):
    status: str
    version: str


class InstanceResponse(StrictModel):
    system: SystemModel
    pool: PoolModel


class DetectabilityResponse(StrictModel):
    per_candidate: list[bool]
    all_candidates_detectable: bool
    mixture_detectable: bool
    satisfied_condition: str
    warnings: list[str]

    @classmethod
    def from_report(cls, report: DetectabilityReport) -> "DetectabilityResponse":
        return cls(
            per_candidate=list(report.per_candidate),
            all_candidates_detectable=report.all_candidates_detectable,
            mixture_detectable=report.mixture_detectable,
            satisfied_condition=report.satisfied_condition,
            warnings=list(report.warnings),
        )


class RhoStarResponse(StrictModel):
    rho_star: float
    distribution: Vector


class GridPointModel(StrictModel):
    """One accuracy level: ``None`` objective means the point failed or is
    uncertifiable; ``status`` carries the reason."""

    epsilon: float
    rho: float
    distribution: Vector | None
    lambda_star: float | None
    lambda_bar_upper: float | None
    solve_time_ms: float
    status: str
    feasible: bool

    @classmethod
    def from_point(cls, point: GridPoint) -> "GridPointModel":
        dist = None if point.distribution is None else point.distribution.tolist()
        return cls(
            epsilon=point.epsilon,
            rho=point.rho,
            distribution=dist,
            lambda_star=finite_or_none(point.lambda_star),
            lambda_bar_upper=finite_or_none(point.lambda_bar_upper),
            solve_time_ms=point.solve_time_ms,
            status=point.status,
            feasible=point.feasible,
        )


class GridSearchResponse(StrictModel):
    mode: str
    sample_size: int
    delta: float
    c0: float
    rho_star: float
    chosen: int
    points: list[GridPointModel]
    best_parameters: ParametersModel
    grid_csv: str
    distribution_csv: str

    @classmethod
    def from_result(cls, result: GridSearchResult, pool: SensorPool) -> "GridSearchResponse":
        return cls(
            mode=result.mode,
            sample_size=result.sample_size,
            delta=result.delta,
            c0=result.c0,
            rho_star=result.rho_star,
            chosen=result.chosen,
            points=[GridPointModel.from_point(pt) for pt in result.points],
            best_parameters=ParametersModel.from_params(result.best_parameters(pool)),
            grid_csv=result.to_csv(),
            distribution_csv=result.distribution_csv(),
        )


class HeterogeneousSearchResponse(StrictModel):
    per_partition: list[GridSearchResponse]
    parameters: list[ParametersModel]
    bounds: BoundsModel

    @classmethod
    def from_result(
        cls, result: HeterogeneousSearchResult, sub_pools: list[SensorPool]
    ) -> "HeterogeneousSearchResponse":
        return cls(
            per_partition=[
                GridSearchResponse.from_result(res, sub)
                for res, sub in zip(result.per_partition, sub_pools)
            ],
            parameters=[ParametersModel.from_params(p) for p in result.parameters],
            bounds=BoundsModel.from_bounds(result.bounds),
        )


class UniformBaselineResponse(StrictModel):
    parameters: ParametersModel
    bounds: BoundsModel

    @classmethod
    def from_result(cls, result: UniformBaselineResult) -> "UniformBaselineResponse":
        return cls(
            parameters=ParametersModel.from_params(result.parameters),
            bounds=BoundsModel.from_bounds(result.bounds),
        )


class AlphaResponse(StrictModel):
    """Cap-satisfaction bound and the floors it implies.

    ``expected_draws_bound`` is ``None`` when the bound is non-positive
    (no finite guarantee on the number of rejection-sampling attempts).
    """

    alpha: float
    intersection_floor: float
    conditional_floor: float
    expected_draws_bound: float | None

    @field_serializer("expected_draws_bound")
    def _ser_bound(self, value: float | None):
        return None if value is None else finite_or_none(value)


class GreedyRoundModel(StrictModel):
    round: int
    subset: list[int]
    chosen: int
    lambda_bar: float


class GreedyResponse(StrictModel):
    selection: SelectionModel
    rounds: list[GreedyRoundModel]
    lambda_bar: float
    rounds_csv: str

    @classmethod
    def from_result(cls, result: GreedyResult) -> "GreedyResponse":
        return cls(
            selection=SelectionModel.from_selection(result.selection),
            rounds=[
                GreedyRoundModel(
                    round=r.round,
                    subset=list(r.subset),
                    chosen=r.chosen,
                    lambda_bar=r.lambda_bar,
                )
                for r in result.rounds
            ],
            lambda_bar=result.lambda_bar,
            rounds_csv=result.to_csv(),
        )


class StudyResponse(StrictModel):
    """Harness output as the CSV artifacts plus the resolved config text."""

    kind: str
    config_text: str
    trial_csv: str
    summary_csv: str


class ErrorDetail(StrictModel):
    """Structured body attached to domain-error responses."""

    error: str
    message: str
    context: dict[str, float | int | str] = Field(default_factory=dict)
