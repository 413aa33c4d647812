"""Sampling-law design: eigenvalue programs, grid search, uniform baseline.

For a fixed accuracy/domination pair ``(eps, rho)`` the best sampling law
maximizes the smallest eigenvalue of the inverse of the upper covariance
bound, subject to the domination constraints ``rho E[Z](p) >= Z_j``.  Two
conic programs implement this:

* the time-dependent program scores one predict+update cycle from a known
  covariance — exact, because the slack matrix can be eliminated;
* the steady-state program replaces the Riccati fixed point with a linear
  matrix inequality — a relaxation, so any law it proposes is re-certified
  through the exact fixed point before it is trusted.

The grid search sweeps ``eps`` over the feasible band, solves the selected
program at each point, and keeps the tuple whose *certified* upper bound is
best.  A uniform-law baseline and a dense simplex search (a solver-free
second route for small pools) round out the module.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import matrices
from .concentration import (
    AwParameters,
    CovarianceBounds,
    bounds_heterogeneous,
    concentration_constant,
    domination_ratio,
    min_domination_ratio,
    minimum_sample_size,
    partition_pool,
    steady_information_sandwich,
)
from .errors import (
    ConvergenceError,
    DetectabilityError,
    DomainError,
    InfeasibleDistributionError,
    InfeasibleSampleSizeError,
    InvalidInputError,
    OptimizationError,
    SingularMatrixError,
)
from .kalman import steady_state
from .system import (
    LtiSystem,
    Partitioning,
    SensorPool,
    expected_information,
    information_detectable,
)
from .sdp import solve_with_fallback

# Closed stand-in for the strict positivity of the objective eigenvalue.
LAMBDA_FLOOR = 1e-12

TIME_MODE = "time-dependent"
STEADY_MODE = "steady-state"


@dataclass(frozen=True)
class ProgramSolution:
    """Optimal law and objective of one eigenvalue program."""

    distribution: np.ndarray
    lambda_star: float
    status: str
    solve_time_ms: float
    mixture_detectable: bool | None = None


def _expected_info_expr(pool: SensorPool, p: cp.Variable) -> cp.Expression:
    flat = pool.information.reshape(pool.n_c, pool.m * pool.m)
    return cp.reshape(flat.T @ p, (pool.m, pool.m), order="C")


def _domination_constraints(
    pool: SensorPool, ez: cp.Expression, rho_hat: float
) -> list[cp.Constraint]:
    return [rho_hat * ez - pool.information[j] >> 0 for j in range(pool.n_c)]


def _binding_candidate(pool: SensorPool) -> int:
    """Candidate whose domination constraint binds at the joint optimum (1-based)."""
    _, p_star = min_domination_ratio(pool)
    ez_plus = matrices.pseudo_inverse(expected_information(pool, p_star))
    quads = np.einsum("ij,ij->i", pool.rows @ ez_plus, pool.rows) / pool.variances
    return int(np.argmax(quads)) + 1


def _clean_simplex(raw: np.ndarray | None, n_c: int) -> np.ndarray:
    if raw is None:
        raise OptimizationError("solver returned no law", status="no solution")
    arr = np.clip(np.asarray(raw, dtype=float).reshape(-1), 0.0, None)
    total = arr.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise OptimizationError("solver returned a degenerate law", status="degenerate")
    return arr / total


def solve_time_dependent(
    sigma: np.ndarray,
    epsilon: float,
    rho: float,
    sample_size: int,
    pool: SensorPool,
    system: LtiSystem,
) -> ProgramSolution:
    """Best law for the covariance one predict+update cycle after ``sigma``.

    Maximizes the smallest eigenvalue of
    ``(A sigma A^T + Q)^{-1} + (1 - eps) n_s E[Z](p)`` over laws satisfying
    the domination constraints at ``rho``.  The reciprocal of the optimum
    is the largest eigenvalue of the one-step upper covariance bound.

    Raises
    ------
    InfeasibleDistributionError
        If no law satisfies domination at this ``rho`` (it is below the
        pool's minimal ratio); the error names the binding candidate.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"relative accuracy {epsilon} outside (0, 1)")
    prior = matrices.predict_covariance(sigma, system.A, system.Q)
    anchor = matrices.spd_inverse(prior, what="propagated prior covariance")
    n_c, m = pool.n_c, pool.m
    p = cp.Variable(n_c, nonneg=True)
    lam = cp.Variable()
    ez = _expected_info_expr(pool, p)
    constraints = [cp.sum(p) == 1, lam >= LAMBDA_FLOOR]
    constraints += _domination_constraints(pool, ez, rho)
    gain = (1.0 - epsilon) * int(sample_size)
    constraints.append(anchor + gain * ez - lam * np.eye(m) >> 0)
    problem = cp.Problem(cp.Maximize(lam), constraints)
    tic = time.perf_counter()
    try:
        status = solve_with_fallback(problem, what="time-dependent design program")
    except OptimizationError as exc:
        if "infeasible" in str(exc.status):
            raise InfeasibleDistributionError(
                f"no law satisfies domination at ratio {rho:.6g}",
                candidate=_binding_candidate(pool),
            ) from exc
        raise
    elapsed = 1e3 * (time.perf_counter() - tic)
    return ProgramSolution(
        distribution=_clean_simplex(p.value, n_c),
        lambda_star=float(lam.value),
        status=status,
        solve_time_ms=elapsed,
    )


def solve_steady_state_relaxation(
    epsilon: float,
    rho: float,
    sample_size: int,
    pool: SensorPool,
    system: LtiSystem,
) -> ProgramSolution:
    """Relaxed steady-state design: LMI surrogate for the Riccati fixed point.

    Maximizes ``lam`` subject to ``X >= lam I`` and the block constraint

        [[-X + Q^{-1} + (1-eps) n_s E[Z](p),  Q^{-1} A    ],
         [A^T Q^{-1},                          X + A^T Q^{-1} A]]  >=  0

    over symmetric ``X``, laws ``p`` under domination, and ``lam``.  The
    exact fixed point is feasible here, but the optimum is only a
    heuristic, so callers must re-certify the returned law through the
    exact recursion.  The solution records whether the mixture pair
    ``(A, E[Z](p*)^{1/2})`` passed the detectability screen; when it fails
    no steady-state certificate exists for this law.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"relative accuracy {epsilon} outside (0, 1)")
    n_c, m = pool.n_c, pool.m
    q_inv = matrices.spd_inverse(system.Q, what="process-noise covariance")
    qa = q_inv @ system.A
    at_q_a = matrices.symmetrize(system.A.T @ q_inv @ system.A)
    p = cp.Variable(n_c, nonneg=True)
    lam = cp.Variable()
    x = cp.Variable((m, m), symmetric=True)
    ez = _expected_info_expr(pool, p)
    gain = (1.0 - epsilon) * int(sample_size)
    block = cp.bmat([[-x + q_inv + gain * ez, qa], [qa.T, x + at_q_a]])
    constraints = [
        cp.sum(p) == 1,
        lam >= LAMBDA_FLOOR,
        x - lam * np.eye(m) >> 0,
        block >> 0,
    ]
    constraints += _domination_constraints(pool, ez, rho)
    problem = cp.Problem(cp.Maximize(lam), constraints)
    tic = time.perf_counter()
    try:
        status = solve_with_fallback(problem, what="steady-state design relaxation")
    except OptimizationError as exc:
        if "infeasible" in str(exc.status):
            raise InfeasibleDistributionError(
                f"no law satisfies domination at ratio {rho:.6g}",
                candidate=_binding_candidate(pool),
            ) from exc
        raise
    elapsed = 1e3 * (time.perf_counter() - tic)
    law = _clean_simplex(p.value, n_c)
    detectable = information_detectable(system, expected_information(pool, law))
    if not detectable:
        status = f"{status} (warning: mixture undetectable)"
    return ProgramSolution(
        distribution=law,
        lambda_star=float(lam.value),
        status=status,
        solve_time_ms=elapsed,
        mixture_detectable=detectable,
    )


def epsilon_grid(lower: float, n_p: int) -> np.ndarray:
    """Half-open uniform grid on [lower, 1): point i = lower + i (1-lower)/n_p."""
    if not 0.0 < lower < 1.0:
        raise DomainError(f"grid lower endpoint {lower} outside (0, 1)")
    if int(n_p) < 1:
        raise DomainError(f"grid needs at least one point, got {n_p}")
    i = np.arange(int(n_p))
    return lower + i * (1.0 - lower) / int(n_p)


@dataclass(frozen=True)
class GridPoint:
    """One evaluated accuracy level of the grid search."""

    epsilon: float
    rho: float
    distribution: np.ndarray | None
    lambda_star: float
    lambda_bar_upper: float  # certified largest eigenvalue of the upper bound
    solve_time_ms: float
    status: str

    @property
    def feasible(self) -> bool:
        return self.distribution is not None and math.isfinite(self.lambda_bar_upper)


@dataclass(frozen=True)
class GridSearchResult:
    """All grid tuples plus the index of the certified-best one."""

    mode: str
    sample_size: int
    delta: float
    c0: float
    rho_star: float
    points: tuple[GridPoint, ...]
    chosen: int

    @property
    def best(self) -> GridPoint:
        return self.points[self.chosen]

    def best_parameters(self, pool: SensorPool) -> AwParameters:
        """Concentration certificate at the winning grid point.

        The accuracy is nudged up to the law's own feasibility endpoint when
        solver slack left the grid value marginally below it, so the
        certificate always verifies cleanly.
        """
        point = self.best
        needed = domination_ratio(pool, point.distribution)
        eps = max(point.epsilon, math.sqrt(needed * self.c0))
        params = AwParameters(
            sample_size=self.sample_size,
            delta=self.delta,
            epsilon=eps,
            rho=eps**2 / self.c0,
            c0=self.c0,
            distribution=point.distribution,
        )
        params.verify(pool)
        return params

    def to_csv(self) -> str:
        """Per-grid-point tuples: epsilon,rho,lambda_star,lambda_bar_U,solve_time_ms,status."""
        lines = ["epsilon,rho,lambda_star,lambda_bar_U,solve_time_ms,status"]
        for pt in self.points:
            lines.append(
                f"{pt.epsilon:.12g},{pt.rho:.12g},{pt.lambda_star:.12g},"
                f"{pt.lambda_bar_upper:.12g},{pt.solve_time_ms:.3f},{pt.status}"
            )
        return "\n".join(lines) + "\n"

    def distribution_csv(self) -> str:
        """Chosen law as (index, probability) rows, 1-based."""
        lines = ["index,probability"]
        for j, pj in enumerate(self.best.distribution, start=1):
            lines.append(f"{j},{pj:.12g}")
        return "\n".join(lines) + "\n"


def _certify_point(
    mode: str,
    solution: ProgramSolution,
    epsilon: float,
    sample_size: int,
    pool: SensorPool,
    system: LtiSystem,
    sigma: np.ndarray | None,
) -> tuple[float, str]:
    """Certified largest eigenvalue of the upper bound at a solved law."""
    ez = expected_information(pool, solution.distribution)
    if mode == TIME_MODE:
        prior = matrices.predict_covariance(sigma, system.A, system.Q)
        upper = matrices.spd_inverse(
            matrices.spd_inverse(prior) + (1.0 - epsilon) * sample_size * ez
        )
        return matrices.max_eigenvalue(upper), solution.status
    if solution.mixture_detectable is False:
        return math.inf, "undetectable"
    upper = steady_state((1.0 - epsilon) * sample_size * ez, system).P
    return matrices.max_eigenvalue(upper), solution.status


def grid_search(
    pool: SensorPool,
    system: LtiSystem,
    sample_size: int,
    delta: float,
    n_p: int,
    *,
    mode: str = STEADY_MODE,
    sigma: np.ndarray | None = None,
    joint: tuple[float, np.ndarray] | None = None,
    workers: int = 1,
) -> GridSearchResult:
    """Sweep the feasible accuracy band and keep the certified-best law.

    The band's lower endpoint comes from the pool's minimal domination
    ratio; ``n_p`` equally spaced points cover [endpoint, 1).  Each point
    fixes ``rho = eps^2 / c0`` and solves the mode's design program; the
    winner minimizes the certified largest eigenvalue of the upper bound
    (for the steady-state mode that certificate comes from the exact fixed
    point, not the relaxation's objective).  Infeasible or undetectable
    points are recorded with a status and skipped.

    ``sigma`` is required in time-dependent mode.  ``joint`` optionally
    injects a precomputed ``(rho_star, law)`` pair to skip the joint solve.
    ``workers > 1`` evaluates grid points in a thread pool; aggregation is
    by index, so results are identical to the sequential run.
    """
    if mode not in (TIME_MODE, STEADY_MODE):
        raise DomainError(f"unknown grid-search mode {mode!r}")
    if mode == TIME_MODE and sigma is None:
        raise InvalidInputError("time-dependent mode needs the current covariance")
    rho_star, _ = joint if joint is not None else min_domination_ratio(pool)
    c0 = concentration_constant(sample_size, pool.m, delta)
    lower = math.sqrt(rho_star * c0)
    if lower >= 1.0:
        need = minimum_sample_size(rho_star, pool.m, delta)
        raise InfeasibleSampleSizeError(
            f"sample count {sample_size} infeasible at every accuracy "
            f"(needs at least {need})",
            min_sample_count=need,
        )
    grid = epsilon_grid(lower, n_p)

    def evaluate(eps: float) -> GridPoint:
        rho = eps**2 / c0
        tic = time.perf_counter()
        try:
            if mode == TIME_MODE:
                sol = solve_time_dependent(sigma, eps, rho, sample_size, pool, system)
            else:
                sol = solve_steady_state_relaxation(eps, rho, sample_size, pool, system)
            top, status = _certify_point(mode, sol, eps, sample_size, pool, system, sigma)
            return GridPoint(
                epsilon=eps,
                rho=rho,
                distribution=sol.distribution,
                lambda_star=sol.lambda_star,
                lambda_bar_upper=top,
                solve_time_ms=sol.solve_time_ms,
                status=status,
            )
        except (
            InfeasibleDistributionError,
            OptimizationError,
            DetectabilityError,
            ConvergenceError,
            SingularMatrixError,
        ) as exc:
            elapsed = 1e3 * (time.perf_counter() - tic)
            return GridPoint(
                epsilon=eps,
                rho=rho,
                distribution=None,
                lambda_star=math.nan,
                lambda_bar_upper=math.inf,
                solve_time_ms=elapsed,
                status=f"failed: {exc}",
            )

    if int(workers) > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as ex:
            points = tuple(ex.map(evaluate, grid))
    else:
        points = tuple(evaluate(e) for e in grid)
    feasible = [i for i, pt in enumerate(points) if pt.feasible]
    if not feasible:
        summary = "; ".join(f"eps={pt.epsilon:.4g}: {pt.status}" for pt in points)
        raise OptimizationError(
            f"every grid point failed ({summary})", status="all points failed"
        )
    chosen = min(feasible, key=lambda i: points[i].lambda_bar_upper)
    return GridSearchResult(
        mode=mode,
        sample_size=int(sample_size),
        delta=float(delta),
        c0=c0,
        rho_star=rho_star,
        points=points,
        chosen=chosen,
    )


@dataclass(frozen=True)
class HeterogeneousSearchResult:
    """Independent per-group searches plus their fused steady-state sandwich."""

    per_partition: tuple[GridSearchResult, ...]
    parameters: tuple[AwParameters, ...]
    bounds: CovarianceBounds


def grid_search_heterogeneous(
    part: Partitioning,
    pool: SensorPool,
    system: LtiSystem,
    n_p: int,
    *,
    workers: int = 1,
) -> HeterogeneousSearchResult:
    """Run the steady-state grid search per partition group, then fuse.

    Groups are searched independently (the decentralized scheme — cheaper,
    not jointly optimal); the fused sandwich aggregates each group's
    certificate and multiplies the confidence floors.  Failures are
    collected per group and reported together.
    """
    results: list[GridSearchResult] = []
    failures: list[str] = []
    for i in range(1, part.K + 1):
        sub = partition_pool(pool, part, i)
        try:
            results.append(
                grid_search(
                    sub,
                    system,
                    part.sample_counts[i - 1],
                    part.confidences[i - 1],
                    n_p,
                    mode=STEADY_MODE,
                    workers=workers,
                )
            )
        except (InfeasibleSampleSizeError, OptimizationError) as exc:
            failures.append(f"group {i}: {exc}")
    if failures:
        raise OptimizationError(
            "heterogeneous search failed in " + "; ".join(failures),
            status="partition failures",
        )
    params = tuple(
        res.best_parameters(partition_pool(pool, part, i + 1))
        for i, res in enumerate(results)
    )
    fused = bounds_heterogeneous(part, params, pool, system)
    return HeterogeneousSearchResult(
        per_partition=tuple(results), parameters=params, bounds=fused
    )


@dataclass(frozen=True)
class UniformBaselineResult:
    """Steady-state sandwich for the uniform sampling law."""

    parameters: AwParameters
    bounds: CovarianceBounds


def uniform_baseline(
    pool: SensorPool, sample_size: int, delta: float, system: LtiSystem
) -> UniformBaselineResult:
    """Steady-state sandwich when every candidate is drawn equally often.

    Uses the uniform law's own (generally larger) domination ratio and the
    matching lower-endpoint accuracy ``eps = sqrt(rho_u c0)`` — the unique
    choice consistent with the certificate identity ``eps^2 / rho = c0``.
    """
    u = np.full(pool.n_c, 1.0 / pool.n_c)
    rho_u = domination_ratio(pool, u)
    c0 = concentration_constant(sample_size, pool.m, delta)
    eps = math.sqrt(rho_u * c0)
    if eps >= 1.0:
        need = minimum_sample_size(rho_u, pool.m, delta)
        raise InfeasibleSampleSizeError(
            f"sample count {sample_size} infeasible for the uniform law "
            f"(needs at least {need})",
            min_sample_count=need,
        )
    params = AwParameters(
        sample_size=int(sample_size),
        delta=float(delta),
        epsilon=eps,
        rho=eps**2 / c0,
        c0=c0,
        distribution=u,
    )
    params.verify(pool)
    ez = params.expected_info(pool)
    lower, upper = steady_information_sandwich(ez, int(sample_size), eps, system)
    bounds = CovarianceBounds(
        L=lower, U=upper, probability_floor=1.0 - float(delta), scope="steady-state"
    )
    return UniformBaselineResult(parameters=params, bounds=bounds)


def _simplex_grid(n_c: int, step: float):
    total = round(1.0 / step)
    if abs(total * step - 1.0) > 1e-9:
        raise DomainError(f"grid step {step} must divide 1")
    for cuts in itertools.combinations(range(total + n_c - 1), n_c - 1):
        counts = []
        prev = -1
        for c in cuts:
            counts.append(c - prev - 1)
            prev = c
        counts.append(total + n_c - 2 - prev)
        yield np.asarray(counts, dtype=float) * step


def dense_simplex_search(
    pool: SensorPool,
    system: LtiSystem,
    sample_size: int,
    epsilon: float,
    rho: float,
    *,
    mode: str = TIME_MODE,
    sigma: np.ndarray | None = None,
    step: float = 0.01,
) -> tuple[np.ndarray, float]:
    """Solver-free design route: brute-force the law over a simplex mesh.

    Walks every law on the ``step``-mesh of the simplex, keeps those
    satisfying domination at ``rho``, and scores them exactly (smallest
    eigenvalue of the inverted upper bound in time mode; the fixed point's
    largest eigenvalue in steady mode).  Only sensible for tiny pools — the
    mesh grows combinatorially, so pools beyond 4 candidates are rejected.

    Returns ``(best law, best score)`` where the score is maximized in time
    mode and minimized in steady mode.
    """
    if pool.n_c > 4:
        raise DomainError("dense simplex search is limited to pools of at most 4 candidates")
    if mode not in (TIME_MODE, STEADY_MODE):
        raise DomainError(f"unknown search mode {mode!r}")
    if mode == TIME_MODE:
        if sigma is None:
            raise InvalidInputError("time-dependent mode needs the current covariance")
        prior = matrices.predict_covariance(sigma, system.A, system.Q)
        anchor = matrices.spd_inverse(prior)
    best_p = None
    best_score = -math.inf if mode == TIME_MODE else math.inf
    gain = (1.0 - epsilon) * int(sample_size)
    for p in _simplex_grid(pool.n_c, step):
        try:
            if domination_ratio(pool, p) > rho * (1.0 + 1e-9):
                continue
        except InfeasibleDistributionError:
            continue
        ez = expected_information(pool, p)
        if mode == TIME_MODE:
            score = matrices.min_eigenvalue(anchor + gain * ez)
            better = score > best_score
        else:
            try:
                score = matrices.max_eigenvalue(steady_state(gain * ez, system).P)
            except DetectabilityError:
                continue
            better = score < best_score
        if better:
            best_score = score
            best_p = p
    if best_p is None:
        raise InfeasibleDistributionError(
            f"no mesh law satisfies domination at ratio {rho:.6g}",
            candidate=_binding_candidate(pool),
        )
    return best_p, best_score
