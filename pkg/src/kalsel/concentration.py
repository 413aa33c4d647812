"""Matrix-concentration certificates for randomized sensor selection.

When ``n_s`` sensor indices are drawn i.i.d. from a law ``p`` over the
pool, the summed information matrix concentrates around ``n_s E[Z]``: with
probability at least ``1 - delta``,

    (1 - eps) n_s E[Z]  <=  sum of drawn Z  <=  (1 + eps) n_s E[Z]

in the semidefinite order, provided every candidate's information matrix is
dominated by ``rho E[Z]`` and ``eps^2 / rho`` equals the per-sample
concentration constant ``c0 = (4 / n_s) ln(2 m / delta)``.  This module
computes the smallest feasible domination ratio (closed form for fixed
``p``, a semidefinite program jointly over ``p``), picks feasible
``(eps, rho)`` pairs, and turns them into covariance sandwiches for the
Kalman recursion — at a fixed time, in steady state, and aggregated over a
partitioned pool.  It also provides the probability floors for selection
under per-candidate repetition caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import cvxpy as cp
import numpy as np

from . import matrices
from .errors import (
    AssumptionError,
    DimensionError,
    DomainError,
    InfeasibleDistributionError,
    InfeasibleSampleSizeError,
    InvalidInputError,
)
from .kalman import steady_state
from .system import (
    LtiSystem,
    Partitioning,
    SensorPool,
    check_simplex,
    expected_information,
)
from .sdp import solve_with_fallback

# Relative tolerance for membership of a sensor row in the range of E[Z].
_RANGE_TOL = 1e-8


def concentration_constant(sample_size: int, m: int, delta: float) -> float:
    """Per-sample concentration constant ``(4 / n) ln(2 m / delta)``."""
    n = int(sample_size)
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {sample_size}")
    if int(m) < 1:
        raise DomainError(f"state dimension must be >= 1, got {m}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"failure budget must lie in (0, 1), got {delta}")
    return (4.0 / n) * math.log(2.0 * int(m) / delta)


def domination_ratio(pool: SensorPool, distribution: Sequence[float]) -> float:
    """Smallest ``rho`` with ``Z_j <= rho E[Z]`` for every candidate ``j``.

    Closed form: by a Schur-complement argument the constraint for
    candidate ``j`` holds iff ``c_j`` lies in the range of ``E[Z]`` and
    ``rho sigma_j^2 >= c_j^T E[Z]^+ c_j``; the answer is the largest such
    quadratic over the pool, floored at 1.

    Raises
    ------
    InfeasibleDistributionError
        If some sensor row falls outside the range of ``E[Z]`` — then no
        finite ratio exists.  The error names the first offending candidate
        (1-based).
    """
    ez = expected_information(pool, distribution)
    ez_plus = matrices.pseudo_inverse(ez)
    projected = pool.rows @ ez_plus  # row j is c_j^T E[Z]^+
    residual = pool.rows - projected @ ez
    row_scale = np.maximum(1.0, np.linalg.norm(pool.rows, axis=1))
    bad = np.linalg.norm(residual, axis=1) > _RANGE_TOL * row_scale
    if np.any(bad):
        j = int(np.argmax(bad)) + 1
        raise InfeasibleDistributionError(
            f"sensor {j} is not reachable from the mean information matrix; "
            "no finite domination ratio exists for this law",
            candidate=j,
        )
    quads = np.einsum("ij,ij->i", projected, pool.rows) / pool.variances
    return max(1.0, float(quads.max()))


def min_domination_ratio(pool: SensorPool) -> tuple[float, np.ndarray]:
    """Minimal domination ratio over all sampling laws, with a certificate.

    Solves the joint semidefinite program over ``(rho, p)`` whose
    constraints are the Schur-complement blocks
    ``[[E[Z](p), c_j], [c_j^T, rho sigma_j^2]] >= 0`` for every candidate.
    Returns ``(rho_star, p_star)``; the ratio is re-evaluated in closed
    form on the returned law so the pair is always self-consistent.
    """
    n_c, m = pool.n_c, pool.m
    p = cp.Variable(n_c, nonneg=True)
    rho = cp.Variable()
    z_flat = pool.information.reshape(n_c, m * m)
    ez = cp.reshape(z_flat.T @ p, (m, m), order="C")
    constraints = [cp.sum(p) == 1, rho >= 1]
    for j in range(n_c):
        cj = pool.rows[j].reshape(m, 1)
        block = cp.bmat(
            [[ez, cj], [cj.T, cp.reshape(rho * pool.variances[j], (1, 1), order="C")]]
        )
        constraints.append(block >> 0)
    problem = cp.Problem(cp.Minimize(rho), constraints)
    solve_with_fallback(problem, what="joint domination-ratio program")
    raw = np.clip(np.asarray(p.value, dtype=float).reshape(-1), 0.0, None)
    p_star = raw / raw.sum()
    try:
        value = domination_ratio(pool, p_star)
    except InfeasibleDistributionError:
        # Clipping pushed a borderline candidate out of range; trust the
        # solver's objective in that case.
        value = max(1.0, float(rho.value))
    return value, p_star


@dataclass(frozen=True)
class AwParameters:
    """A feasible concentration certificate ``(n_s, delta, eps, rho, c0, p)``.

    Invariants enforced on construction: ``eps in (0, 1)``, ``rho >= 1``,
    and ``eps^2 / rho = c0`` within 1e-12.  Domination of every candidate
    (``Z_j <= rho E[Z]``) depends on the pool and is checked by
    :meth:`verify`; the constructor functions in this module always call it
    before handing the certificate out.
    """

    sample_size: int
    delta: float
    epsilon: float
    rho: float
    c0: float
    distribution: np.ndarray

    def __post_init__(self) -> None:
        if int(self.sample_size) < 1:
            raise DomainError(f"sample size must be >= 1, got {self.sample_size}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"failure budget must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"relative accuracy must lie in (0, 1), got {self.epsilon}")
        if self.rho < 1.0:
            raise DomainError(f"domination ratio must be >= 1, got {self.rho}")
        if self.c0 <= 0.0:
            raise DomainError(f"concentration constant must be positive, got {self.c0}")
        if abs(self.epsilon**2 / self.rho - self.c0) > 1e-12:
            raise InvalidInputError(
                "certificate is inconsistent: eps^2 / rho must equal the "
                "concentration constant within 1e-12"
            )
        object.__setattr__(self, "sample_size", int(self.sample_size))
        object.__setattr__(self, "distribution", check_simplex(self.distribution))

    @property
    def n_c(self) -> int:
        return self.distribution.size

    def verify(self, pool: SensorPool, tol: float = matrices.LOEWNER_TOL) -> None:
        """Check ``Z_j <= rho E[Z]`` for every candidate in the pool.

        Raises :class:`InfeasibleDistributionError` naming the first
        violating candidate (1-based).
        """
        if pool.n_c != self.n_c:
            raise DimensionError(
                f"certificate covers {self.n_c} candidates, pool has {pool.n_c}"
            )
        scaled = self.rho * expected_information(pool, self.distribution)
        for j in range(1, pool.n_c + 1):
            if not matrices.loewner_leq(pool.info_matrix(j), scaled, tol):
                raise InfeasibleDistributionError(
                    f"candidate {j} escapes the domination envelope at rho={self.rho:.6g}",
                    candidate=j,
                )

    def expected_info(self, pool: SensorPool) -> np.ndarray:
        return expected_information(pool, self.distribution)


def _lower_epsilon(rho_star: float, c0: float) -> float:
    return math.sqrt(rho_star * c0)


def _pick_epsilon(lo: float, epsilon: float | None) -> float:
    if epsilon is None:
        return 0.5 * (lo + 1.0)
    eps = float(epsilon)
    if not lo <= eps < 1.0:
        raise DomainError(
            f"relative accuracy {eps} outside the feasible band [{lo:.6g}, 1)"
        )
    return eps


def minimum_sample_size(rho_star: float, m: int, delta: float) -> int:
    """Smallest integer sample count strictly above ``4 rho* ln(2m/delta)``."""
    threshold = 4.0 * rho_star * math.log(2.0 * int(m) / delta)
    return int(math.floor(threshold)) + 1


def select_sample_size(
    pool: SensorPool,
    delta: float,
    *,
    distribution: Sequence[float] | None = None,
    margin: int = 0,
    epsilon: float | None = None,
) -> AwParameters:
    """Pick the smallest admissible sample count, then feasible ``(eps, rho)``.

    When no law is supplied the joint program's optimal certificate is
    used.  ``margin`` adds extra samples on top of the minimum.  ``epsilon``
    overrides the default midpoint policy inside the feasible band.
    """
    if margin < 0:
        raise DomainError(f"sample-size margin must be >= 0, got {margin}")
    if distribution is None:
        rho_star, p = min_domination_ratio(pool)
    else:
        p = check_simplex(distribution, pool.n_c)
        rho_star = domination_ratio(pool, p)
    n_s = minimum_sample_size(rho_star, pool.m, delta) + int(margin)
    c0 = concentration_constant(n_s, pool.m, delta)
    eps = _pick_epsilon(_lower_epsilon(rho_star, c0), epsilon)
    params = AwParameters(
        sample_size=n_s, delta=delta, epsilon=eps, rho=eps**2 / c0, c0=c0, distribution=p
    )
    params.verify(pool)
    return params


def select_parameters_for_sample_size(
    pool: SensorPool,
    sample_size: int,
    delta: float,
    *,
    distribution: Sequence[float] | None = None,
    epsilon: float | None = None,
) -> AwParameters:
    """Feasible ``(eps, rho, p)`` for a caller-fixed sample count.

    Raises
    ------
    InfeasibleSampleSizeError
        If the sample count is at or below the feasibility threshold
        ``4 rho* ln(2m/delta)``; the error carries the minimum count that
        would work.
    """
    if distribution is None:
        rho_star, p = min_domination_ratio(pool)
    else:
        p = check_simplex(distribution, pool.n_c)
        rho_star = domination_ratio(pool, p)
    c0 = concentration_constant(sample_size, pool.m, delta)
    lo = _lower_epsilon(rho_star, c0)
    if lo >= 1.0:
        need = minimum_sample_size(rho_star, pool.m, delta)
        raise InfeasibleSampleSizeError(
            f"sample count {sample_size} is infeasible for this pool "
            f"(needs at least {need})",
            min_sample_count=need,
        )
    eps = _pick_epsilon(lo, epsilon)
    params = AwParameters(
        sample_size=int(sample_size),
        delta=delta,
        epsilon=eps,
        rho=eps**2 / c0,
        c0=c0,
        distribution=p,
    )
    params.verify(pool)
    return params


@dataclass(frozen=True)
class CovarianceBounds:
    """Loewner sandwich ``L <= P <= U`` holding with the stated probability."""

    L: np.ndarray
    U: np.ndarray
    probability_floor: float
    scope: str  # "time-instant" | "steady-state"

    def __post_init__(self) -> None:
        if self.scope not in ("time-instant", "steady-state"):
            raise InvalidInputError(f"unknown bound scope {self.scope!r}")
        if not 0.0 <= self.probability_floor <= 1.0:
            raise DomainError(f"probability floor {self.probability_floor} outside [0, 1]")
        if not matrices.loewner_leq(self.L, self.U):
            raise InvalidInputError("lower bound exceeds upper bound in the Loewner order")

    @property
    def worst_case(self) -> float:
        """Largest eigenvalue of the upper bound."""
        return matrices.max_eigenvalue(self.U)

    def contains(self, P: np.ndarray, tol: float = matrices.LOEWNER_TOL) -> bool:
        return matrices.loewner_leq(self.L, P, tol) and matrices.loewner_leq(P, self.U, tol)


def information_sandwich(
    sigma: np.ndarray, expected_info: np.ndarray, sample_size: int, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """One-step covariance sandwich for a known prior covariance.

    ``L = (sigma^{-1} + (1+eps) n_s E[Z])^{-1}`` and ``U`` likewise with
    ``(1-eps)``.  ``epsilon = 0`` collapses both to the nominal update.
    """
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"relative accuracy {epsilon} outside [0, 1)")
    sigma_inv = matrices.spd_inverse(sigma, what="prior covariance")
    ez = matrices.require_psd(expected_info, what="mean information")
    n = int(sample_size)
    lower = matrices.spd_inverse(sigma_inv + (1.0 + epsilon) * n * ez)
    upper = matrices.spd_inverse(sigma_inv + (1.0 - epsilon) * n * ez)
    return lower, upper


def steady_information_sandwich(
    expected_info: np.ndarray,
    sample_size: int,
    epsilon: float,
    system: LtiSystem,
) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state covariance sandwich: fixed points at inflated/deflated information."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"relative accuracy {epsilon} outside [0, 1)")
    ez = matrices.require_psd(expected_info, what="mean information")
    n = int(sample_size)
    lower = steady_state((1.0 + epsilon) * n * ez, system).P
    upper = steady_state((1.0 - epsilon) * n * ez, system).P
    return lower, upper


def bounds_at_time(
    sigma_t: np.ndarray, params: AwParameters, pool: SensorPool
) -> CovarianceBounds:
    """Covariance sandwich after one randomized batch from prior ``sigma_t``."""
    ez = params.expected_info(pool)
    lower, upper = information_sandwich(sigma_t, ez, params.sample_size, params.epsilon)
    return CovarianceBounds(
        L=lower, U=upper, probability_floor=1.0 - params.delta, scope="time-instant"
    )


def bounds_steady_state(
    params: AwParameters, pool: SensorPool, system: LtiSystem
) -> CovarianceBounds:
    """Steady-state covariance sandwich under per-step randomized batches."""
    ez = params.expected_info(pool)
    lower, upper = steady_information_sandwich(ez, params.sample_size, params.epsilon, system)
    return CovarianceBounds(
        L=lower, U=upper, probability_floor=1.0 - params.delta, scope="steady-state"
    )


def partition_pool(pool: SensorPool, part: Partitioning, group: int) -> SensorPool:
    """Sub-pool holding the candidates of one partition group (1-based)."""
    if part.n_c != pool.n_c:
        raise DimensionError(
            f"partitioning covers {part.n_c} candidates, pool has {pool.n_c}"
        )
    sl = part.group_slice(group)
    return SensorPool.from_arrays(pool.rows[sl], pool.variances[sl])


def bounds_heterogeneous(
    part: Partitioning,
    params_list: Sequence[AwParameters],
    pool: SensorPool,
    system: LtiSystem,
) -> CovarianceBounds:
    """Aggregated steady-state sandwich for a partitioned pool.

    Each group contributes ``(1 -+ eps_i) n_s_i E[Z_i]`` to the summed
    information of the two fixed-point recursions; the floors multiply:
    ``prod_i (1 - delta_i)``.  Group certificates must match the
    partitioning's sample counts and confidences.
    """
    if len(params_list) != part.K:
        raise DimensionError(f"{len(params_list)} certificates for {part.K} groups")
    theta_upper = np.zeros((system.m, system.m))
    theta_lower = np.zeros((system.m, system.m))
    floor = 1.0
    for i, params in enumerate(params_list, start=1):
        sub = partition_pool(pool, part, i)
        if params.sample_size != part.sample_counts[i - 1]:
            raise InvalidInputError(
                f"group {i} certificate uses {params.sample_size} samples, "
                f"partitioning says {part.sample_counts[i - 1]}"
            )
        if abs(params.delta - part.confidences[i - 1]) > 1e-12:
            raise InvalidInputError(
                f"group {i} certificate budget {params.delta} differs from "
                f"partitioning budget {part.confidences[i - 1]}"
            )
        params.verify(sub)
        ez = params.expected_info(sub)
        n = params.sample_size
        theta_upper = theta_upper + (1.0 - params.epsilon) * n * ez
        theta_lower = theta_lower + (1.0 + params.epsilon) * n * ez
        floor *= 1.0 - params.delta
    lower = steady_state(theta_lower, system).P
    upper = steady_state(theta_upper, system).P
    return CovarianceBounds(L=lower, U=upper, probability_floor=floor, scope="steady-state")


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-candidate repetition caps for constrained selection."""

    caps: tuple[int, ...]
    uniform_factor: int | None = None

    def __post_init__(self) -> None:
        caps = tuple(int(k) for k in self.caps)
        if not caps:
            raise InvalidInputError("constraint spec needs at least one cap")
        if any(k < 0 for k in caps):
            raise DomainError("repetition caps must be non-negative")
        if self.uniform_factor is not None:
            ku = int(self.uniform_factor)
            if any(k != ku for k in caps):
                raise InvalidInputError("uniform_factor set but caps are not uniform")
            object.__setattr__(self, "uniform_factor", ku)
        object.__setattr__(self, "caps", caps)

    @classmethod
    def uniform(cls, n_c: int, factor: int) -> "ConstraintSpec":
        if int(n_c) < 1:
            raise DomainError("need at least one candidate")
        return cls(caps=(int(factor),) * int(n_c), uniform_factor=int(factor))

    @property
    def n_c(self) -> int:
        return len(self.caps)

    @property
    def max_cap(self) -> int:
        return max(self.caps)

    @property
    def cap_sum(self) -> int:
        return sum(self.caps)

    def admits(self, sample_size: int) -> bool:
        """Whether the cap structure leaves room for ``n_s`` draws."""
        return self.max_cap <= int(sample_size) <= self.cap_sum


def cap_satisfaction_bound(
    spec: ConstraintSpec, sample_size: int, distribution: Sequence[float]
) -> float:
    """Lower bound on the probability that an unconstrained draw obeys the caps.

    With draw counts ``B_j ~ Binomial(n_s, p_j)``, a union bound gives
    ``P[all B_j <= k_j] >= 1 - sum_j P[B_j > k_j]``; this returns that
    bound (at most 1, possibly negative).  Tail sums use exact compensated
    accumulation of log-space pmf terms.

    Raises
    ------
    AssumptionError
        If ``n_s`` falls outside ``[max cap, sum of caps]``, or a candidate
        has a positive cap but zero probability (the caps are meant to
        describe the support of the law).
    """
    n = int(sample_size)
    p = check_simplex(distribution, spec.n_c)
    if not spec.admits(n):
        raise AssumptionError(
            f"sample count {n} outside the admissible cap window "
            f"[{spec.max_cap}, {spec.cap_sum}]"
        )
    for j, (cap, pj) in enumerate(zip(spec.caps, p), start=1):
        if pj == 0.0 and cap > 0:
            raise AssumptionError(
                f"candidate {j} has zero probability but positive cap {cap}; "
                "caps must vanish off the support"
            )
    tails = []
    for cap, pj in zip(spec.caps, p):
        if cap >= n:
            tails.append(0.0)
            continue
        head = math.fsum(matrices.binomial_pmf(n, i, pj) for i in range(0, cap + 1))
        tails.append(max(0.0, 1.0 - head))
    return 1.0 - math.fsum(tails)


@dataclass(frozen=True)
class ConstrainedFloors:
    """Probability floors for cap-respecting selection."""

    intersection_floor: float
    conditional_floor: float
    expected_draws_bound: float


def constrained_floors(alpha: float, delta: float) -> ConstrainedFloors:
    """Floors implied by a cap-satisfaction bound ``alpha``.

    Returns the clamped floors for the joint event (sandwich AND caps
    hold), for the sandwich conditioned on cap satisfaction, and the upper
    bound ``1 / alpha`` on the expected number of rejection-sampling
    attempts.  Non-positive ``alpha`` degenerates to zero floors and an
    infinite attempt bound.
    """
    a = float(alpha)
    if a > 1.0 + 1e-12:
        raise DomainError(f"cap-satisfaction bound {alpha} exceeds 1")
    a = min(a, 1.0)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"failure budget must lie in (0, 1), got {delta}")
    if a <= 0.0:
        return ConstrainedFloors(0.0, 0.0, math.inf)
    return ConstrainedFloors(
        intersection_floor=matrices.clamp_probability(a - delta),
        conditional_floor=matrices.clamp_probability(1.0 - delta / a),
        expected_draws_bound=1.0 / a,
    )
