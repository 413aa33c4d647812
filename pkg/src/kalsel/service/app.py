"""FastAPI application wrapping the selection toolkit.

Every endpoint is a thin translation layer: decode the pydantic payload
into core objects, call one core function, encode the result.  Domain
errors from the core surface as HTTP 400 with a structured body naming the
error class and any remediation quantity it carries (minimum feasible
sample count, offending candidate, solver status, ...).  Validation errors
in the payload itself keep FastAPI's standard 422.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

import kalsel
from kalsel.concentration import (
    ConstraintSpec,
    bounds_at_time,
    bounds_heterogeneous,
    bounds_steady_state,
    cap_satisfaction_bound,
    constrained_floors,
    min_domination_ratio,
    partition_pool,
    select_parameters_for_sample_size,
    select_sample_size,
)
from kalsel.errors import InvalidInputError, KalselError
from kalsel.experiments import (
    ExperimentConfig,
    run_constrained_study,
    run_heterogeneous_study,
    run_policy_comparison,
)
from kalsel.greedy import GreedyConfig, greedy_select
from kalsel.instances import generate_instance
from kalsel.kalman import warmup_sigma
from kalsel.optimizer import grid_search, grid_search_heterogeneous, uniform_baseline
from kalsel.sampling import (
    CategoricalSampler,
    RngStream,
    draw_constrained,
    draw_heterogeneous,
    draw_homogeneous,
)
from kalsel.service import schemas
from kalsel.system import check_detectability_conditions

_CONTEXT_ATTRS = (
    "candidate",
    "min_sample_count",
    "status",
    "residual",
    "alpha",
    "expected_draws_bound",
)


def _error_context(exc: KalselError) -> dict:
    """Remediation data carried by the error, JSON-safe."""
    out: dict = {}
    for name in _CONTEXT_ATTRS:
        value = getattr(exc, name, None)
        if value is None:
            continue
        if isinstance(value, float) and not math.isfinite(value):
            value = repr(value)
        out[name] = value
    return out


def _constraint_spec(
    caps: list[int] | None, uniform_factor: int | None, n_c: int
) -> ConstraintSpec:
    if (caps is None) == (uniform_factor is None):
        raise InvalidInputError("give exactly one of caps or uniform_factor")
    if caps is not None:
        return ConstraintSpec(caps=tuple(caps))
    return ConstraintSpec.uniform(n_c, uniform_factor)


def create_app() -> FastAPI:
    app = FastAPI(title="kalsel", version=kalsel.__version__)

    @app.exception_handler(KalselError)
    async def _domain_error(request, exc: KalselError):
        detail = schemas.ErrorDetail(
            error=type(exc).__name__, message=str(exc), context=_error_context(exc)
        )
        return JSONResponse(status_code=400, content=detail.model_dump())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=kalsel.__version__)

    @app.post("/instances/generate", response_model=schemas.InstanceResponse)
    def instances_generate(req: schemas.GenerateRequest) -> schemas.InstanceResponse:
        system, pool = generate_instance(
            req.m,
            req.n_c,
            RngStream(req.seed, req.stream),
            sigma2=req.sigma2,
            q_scale=req.q_scale,
            spectral_radius=req.spectral_radius,
        )
        return schemas.InstanceResponse(
            system=schemas.SystemModel.from_system(system),
            pool=schemas.PoolModel.from_pool(pool),
        )

    @app.post("/detectability/check", response_model=schemas.DetectabilityResponse)
    def detectability_check(req: schemas.DetectabilityRequest):
        report = check_detectability_conditions(
            req.system.to_system(), req.pool.to_pool(), req.distribution
        )
        return schemas.DetectabilityResponse.from_report(report)

    @app.post("/feasibility/rho-star", response_model=schemas.RhoStarResponse)
    def feasibility_rho_star(req: schemas.PoolOnlyRequest) -> schemas.RhoStarResponse:
        rho_star, p = min_domination_ratio(req.pool.to_pool())
        return schemas.RhoStarResponse(rho_star=rho_star, distribution=p.tolist())

    @app.post("/parameters/sample-size", response_model=schemas.ParametersModel)
    def parameters_sample_size(req: schemas.SampleSizeRequest) -> schemas.ParametersModel:
        params = select_sample_size(
            req.pool.to_pool(),
            req.delta,
            distribution=req.distribution,
            margin=req.margin,
            epsilon=req.epsilon,
        )
        return schemas.ParametersModel.from_params(params)

    @app.post("/parameters/for-sample-size", response_model=schemas.ParametersModel)
    def parameters_for_sample_size(req: schemas.ParametersRequest) -> schemas.ParametersModel:
        params = select_parameters_for_sample_size(
            req.pool.to_pool(),
            req.sample_size,
            req.delta,
            distribution=req.distribution,
            epsilon=req.epsilon,
        )
        return schemas.ParametersModel.from_params(params)

    @app.post("/bounds/time", response_model=schemas.BoundsModel)
    def bounds_time(req: schemas.TimeBoundsRequest) -> schemas.BoundsModel:
        if req.sigma is not None:
            sigma = np.asarray(req.sigma)
        elif req.system is not None:
            sigma = warmup_sigma(req.system.to_system(), req.warmup)
        else:
            raise InvalidInputError(
                "finite-horizon bounds need either the current covariance "
                "or a system to warm one up from"
            )
        bounds = bounds_at_time(sigma, req.parameters.to_params(), req.pool.to_pool())
        return schemas.BoundsModel.from_bounds(bounds)

    @app.post("/bounds/steady-state", response_model=schemas.BoundsModel)
    def bounds_steady(req: schemas.SteadyBoundsRequest) -> schemas.BoundsModel:
        bounds = bounds_steady_state(
            req.parameters.to_params(), req.pool.to_pool(), req.system.to_system()
        )
        return schemas.BoundsModel.from_bounds(bounds)

    @app.post("/bounds/heterogeneous", response_model=schemas.BoundsModel)
    def bounds_hetero(req: schemas.HeterogeneousBoundsRequest) -> schemas.BoundsModel:
        bounds = bounds_heterogeneous(
            req.partitioning.to_partitioning(),
            [p.to_params() for p in req.parameters],
            req.pool.to_pool(),
            req.system.to_system(),
        )
        return schemas.BoundsModel.from_bounds(bounds)

    @app.post("/optimize/grid-search", response_model=schemas.GridSearchResponse)
    def optimize_grid_search(req: schemas.GridSearchRequest) -> schemas.GridSearchResponse:
        system = req.system.to_system()
        pool = req.pool.to_pool()
        sigma = None
        if req.mode == "time-dependent":
            sigma = (
                np.asarray(req.sigma) if req.sigma is not None
                else warmup_sigma(system, req.warmup)
            )
        result = grid_search(
            pool,
            system,
            req.sample_size,
            req.delta,
            req.n_p,
            mode=req.mode,
            sigma=sigma,
            workers=req.workers,
        )
        return schemas.GridSearchResponse.from_result(result, pool)

    @app.post("/optimize/heterogeneous", response_model=schemas.HeterogeneousSearchResponse)
    def optimize_heterogeneous(req: schemas.HeterogeneousSearchRequest):
        system = req.system.to_system()
        pool = req.pool.to_pool()
        part = req.partitioning.to_partitioning()
        result = grid_search_heterogeneous(part, pool, system, req.n_p, workers=req.workers)
        subs = [partition_pool(pool, part, i) for i in range(1, part.K + 1)]
        return schemas.HeterogeneousSearchResponse.from_result(result, subs)

    @app.post("/optimize/uniform-baseline", response_model=schemas.UniformBaselineResponse)
    def optimize_uniform(req: schemas.UniformBaselineRequest):
        result = uniform_baseline(
            req.pool.to_pool(), req.sample_size, req.delta, req.system.to_system()
        )
        return schemas.UniformBaselineResponse.from_result(result)

    @app.post("/sample/homogeneous", response_model=schemas.SelectionModel)
    def sample_homogeneous(req: schemas.HomogeneousDrawRequest) -> schemas.SelectionModel:
        rng = RngStream(req.seed, req.stream)
        sel = draw_homogeneous(CategoricalSampler(req.distribution), req.sample_size, rng)
        return schemas.SelectionModel.from_selection(sel, variates_consumed=rng.counter)

    @app.post("/sample/constrained", response_model=schemas.SelectionModel)
    def sample_constrained(req: schemas.ConstrainedDrawRequest) -> schemas.SelectionModel:
        sampler = CategoricalSampler(req.distribution)
        spec = _constraint_spec(req.caps, req.uniform_factor, sampler.n_c)
        rng = RngStream(req.seed, req.stream)
        sel = draw_constrained(
            sampler, req.sample_size, spec, rng, max_attempts=req.max_attempts
        )
        return schemas.SelectionModel.from_selection(
            sel, attempts=sel.rejection_count, variates_consumed=rng.counter
        )

    @app.post("/sample/heterogeneous", response_model=schemas.SelectionModel)
    def sample_heterogeneous(req: schemas.HeterogeneousDrawRequest) -> schemas.SelectionModel:
        part = req.partitioning.to_partitioning()
        samplers = [CategoricalSampler(p) for p in req.distributions]
        rng = RngStream(req.seed, req.stream)
        sel = draw_heterogeneous(part, samplers, rng)
        return schemas.SelectionModel.from_selection(sel, variates_consumed=rng.counter)

    @app.post("/alpha", response_model=schemas.AlphaResponse)
    def alpha(req: schemas.AlphaRequest) -> schemas.AlphaResponse:
        spec = _constraint_spec(req.caps, req.uniform_factor, len(req.distribution))
        a = cap_satisfaction_bound(spec, req.sample_size, req.distribution)
        floors = constrained_floors(a, req.delta)
        return schemas.AlphaResponse(
            alpha=a,
            intersection_floor=floors.intersection_floor,
            conditional_floor=floors.conditional_floor,
            expected_draws_bound=schemas.finite_or_none(floors.expected_draws_bound),
        )

    @app.post("/greedy", response_model=schemas.GreedyResponse)
    def greedy(req: schemas.GreedyRequest) -> schemas.GreedyResponse:
        rng = None if req.seed is None else RngStream(req.seed, req.stream)
        config = GreedyConfig(gamma=req.gamma, n_s=req.sample_size, rng=rng)
        result = greedy_select(
            config, req.pool.to_pool(), req.system.to_system(), workers=req.workers
        )
        return schemas.GreedyResponse.from_result(result)

    def _study(runner, req: schemas.StudyRequest) -> schemas.StudyResponse:
        config = ExperimentConfig.from_mapping(dict(req.config))
        record = runner(config)
        return schemas.StudyResponse(
            kind=record.kind,
            config_text=record.config_text(),
            trial_csv=record.trial_csv(),
            summary_csv=record.summary_csv(),
        )

    @app.post("/studies/compare", response_model=schemas.StudyResponse)
    def studies_compare(req: schemas.StudyRequest) -> schemas.StudyResponse:
        return _study(run_policy_comparison, req)

    @app.post("/studies/hetero", response_model=schemas.StudyResponse)
    def studies_hetero(req: schemas.StudyRequest) -> schemas.StudyResponse:
        return _study(run_heterogeneous_study, req)

    @app.post("/studies/constrained", response_model=schemas.StudyResponse)
    def studies_constrained(req: schemas.StudyRequest) -> schemas.StudyResponse:
        return _study(run_constrained_study, req)

    return app


app = create_app()
