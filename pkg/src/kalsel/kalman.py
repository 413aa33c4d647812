"""Covariance propagation and steady-state fixed points.

The central map is the filtered-covariance recursion
``P <- ((A P A^T + Q)^{-1} + Theta)^{-1}`` where ``Theta`` is the
information added per step by whatever sensors are in use.  Finite-horizon
trajectories and the steady-state (Riccati fixed point) solver both call
this one map, so time-dependent and asymptotic bounds share a single code
path.

The fixed point is found by plain iteration rather than a spectral DARE
solver: the iteration is exactly the recursion being modelled, converges
geometrically whenever ``(A, Theta^{1/2})`` is detectable, and the unique
positive-definite fixed point does not depend on the (positive-definite)
starting covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matrices
from .errors import ConvergenceError, DetectabilityError
from .system import (
    LtiSystem,
    Selection,
    SensorPool,
    information_detectable,
    selection_information,
)

TOL_DARE = 1e-11
MAX_ITER_DARE = 100_000


@dataclass(frozen=True)
class CovarianceTrajectory:
    """Filtered covariances P_0..P_T and the one-step predictions from each."""

    filtered: tuple[np.ndarray, ...]
    predicted: tuple[np.ndarray, ...]

    @property
    def horizon(self) -> int:
        return len(self.filtered) - 1

    @property
    def final(self) -> np.ndarray:
        return self.filtered[-1]


@dataclass(frozen=True)
class SteadyStateResult:
    """Fixed point of the filtered recursion plus convergence diagnostics."""

    P: np.ndarray
    iterations: int
    residual: float

    @property
    def worst_error(self) -> float:
        """Largest eigenvalue of the steady-state covariance."""
        return matrices.max_eigenvalue(self.P)


def propagate_filtered(
    P0: np.ndarray, theta: np.ndarray, system: LtiSystem, horizon: int
) -> CovarianceTrajectory:
    """Iterate the filtered recursion exactly ``horizon`` times from ``P0``.

    ``theta`` is the per-step information matrix.  Entry ``t`` of the
    predicted sequence is ``A P_t A^T + Q``.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    p = matrices.as_symmetric(P0)
    th = matrices.require_psd(theta, what="information matrix")
    filtered = [p]
    predicted = [matrices.predict_covariance(p, system.A, system.Q)]
    for _ in range(horizon):
        p = matrices.riccati_step(p, th, system.A, system.Q)
        filtered.append(p)
        predicted.append(matrices.predict_covariance(p, system.A, system.Q))
    return CovarianceTrajectory(tuple(filtered), tuple(predicted))


def warmup_sigma(system: LtiSystem, horizon: int, P0: np.ndarray | None = None) -> np.ndarray:
    """Predicted covariance after ``horizon`` open-loop steps from ``P0``.

    Iterates ``Sigma <- A Sigma A^T + Q`` with no measurements; used to set
    the "current" covariance entering a finite-horizon bound.
    """
    sigma = np.eye(system.m) if P0 is None else matrices.as_symmetric(P0)
    for _ in range(int(horizon)):
        sigma = matrices.predict_covariance(sigma, system.A, system.Q)
    return sigma


def steady_state(
    theta: np.ndarray,
    system: LtiSystem,
    P0: np.ndarray | None = None,
    *,
    tol: float = TOL_DARE,
    max_iter: int = MAX_ITER_DARE,
    check_detectability: bool = True,
) -> SteadyStateResult:
    """Unique positive-definite fixed point of the filtered recursion.

    Stops when the fixed-point residual ``max|f(P) - P|`` drops to ``tol``;
    the returned residual is that certificate for the returned iterate.

    Raises
    ------
    DetectabilityError
        If ``(A, theta^{1/2})`` fails the detectability screen (skipped when
        ``check_detectability`` is false).
    ConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` steps; the
        error carries the last residual.
    """
    th = matrices.require_psd(theta, what="information matrix")
    if check_detectability and not information_detectable(system, th):
        raise DetectabilityError(
            "pair (A, theta^{1/2}) is undetectable; the recursion has no bounded fixed point"
        )
    p = np.eye(system.m) if P0 is None else matrices.as_symmetric(P0)
    residual = np.inf
    for it in range(1, int(max_iter) + 1):
        nxt = matrices.riccati_step(p, th, system.A, system.Q)
        residual = float(np.abs(nxt - p).max())
        if residual <= tol:
            return SteadyStateResult(P=p, iterations=it, residual=residual)
        p = nxt
    raise ConvergenceError(
        f"no fixed point within {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
    )


def selection_steady_state(
    pool: SensorPool,
    sel: Selection,
    system: LtiSystem,
    P0: np.ndarray | None = None,
    *,
    tol: float = TOL_DARE,
    max_iter: int = MAX_ITER_DARE,
) -> SteadyStateResult:
    """Steady-state filtered covariance when ``sel`` is measured every step.

    The per-step information is the selection's summed information matrix;
    order and multiplicity of indices enter only through that sum.
    """
    theta = selection_information(pool, sel)
    return steady_state(theta, system, P0, tol=tol, max_iter=max_iter)
