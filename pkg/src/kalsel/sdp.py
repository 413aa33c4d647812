"""Conic-solver plumbing shared by the feasibility and design programs."""

from __future__ import annotations

import warnings

import cvxpy as cp

from .errors import OptimizationError

# First solver that returns an (inaccurate-)optimal status wins.
SOLVER_CHAIN = ("CLARABEL", "SCS")

_ACCEPTABLE = {cp.OPTIMAL, cp.OPTIMAL_INACCURATE}

# Feasibility/gap targets; downstream Loewner checks at 1e-6 need headroom.
_SOLVER_OPTIONS = {
    "CLARABEL": {},  # defaults already hit 1e-8
    "SCS": {"eps_abs": 1e-8, "eps_rel": 1e-8, "max_iters": 200_000},
}


def solve_with_fallback(problem: cp.Problem, *, what: str = "semidefinite program") -> str:
    """Solve a cvxpy problem, falling back through :data:`SOLVER_CHAIN`.

    Returns the accepted status string.  Raises
    :class:`OptimizationError` carrying the last solver status when every
    solver fails or reports the problem unsolved (the status of an
    infeasible problem is preserved so callers can tell infeasibility from
    solver breakdown).
    """
    last = "no solver attempted"
    for name in SOLVER_CHAIN:
        try:
            with warnings.catch_warnings():
                # status is inspected below; cvxpy's inaccuracy warning is noise
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                problem.solve(solver=name, **_SOLVER_OPTIONS.get(name, {}))
        except cp.error.SolverError as exc:
            last = f"{name}: {exc}"
            continue
        if problem.status in _ACCEPTABLE:
            return problem.status
        last = problem.status
    raise OptimizationError(f"{what} failed ({last})", status=str(last))
