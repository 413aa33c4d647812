"""Greedy sensor-selection baselines scored by worst-case steady error.

The greedy policy builds a selection one slot at a time: each round scores
every considered candidate by the largest eigenvalue of the steady-state
error covariance of the selection-so-far plus that candidate, and keeps the
minimizer.  A subset fraction below one turns this into randomized greedy —
each round only scores a uniformly chosen subset of the pool — which trades
per-round work for solution quality.  Candidates may be picked again in
later rounds, so greedy selections are directly comparable to i.i.d. draws
of the same size.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import matrices
from .errors import (
    ConvergenceError,
    DetectabilityError,
    DomainError,
    InvalidInputError,
    SingularMatrixError,
)
from .kalman import steady_state
from .sampling import RngStream
from .system import LtiSystem, Selection, SensorPool


@dataclass(frozen=True)
class GreedyConfig:
    """Knobs of the greedy policy.

    ``gamma`` is the fraction of the pool scored per round: each round
    considers ``ceil(gamma * n_c)`` candidates, drawn uniformly without
    replacement when ``gamma < 1`` (which requires ``rng``) and the whole
    pool when ``gamma = 1`` (deterministic; ``rng`` is never consumed).
    """

    gamma: float
    n_s: int
    rng: RngStream | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"subset fraction must lie in (0, 1], got {self.gamma}")
        if int(self.n_s) < 1:
            raise DomainError(f"selection size must be >= 1, got {self.n_s}")
        if self.gamma < 1.0 and self.rng is None:
            raise InvalidInputError(
                "a subset fraction below 1 randomizes the per-round subset "
                "and therefore needs an RngStream"
            )

    def subset_size(self, n_c: int) -> int:
        return math.ceil(self.gamma * n_c)


@dataclass(frozen=True)
class GreedyRound:
    """One round's outcome: the subset scored, the pick, and its score."""

    round: int  # 1-based
    subset: tuple[int, ...]
    chosen: int
    lambda_bar: float


@dataclass(frozen=True)
class GreedyResult:
    """Full greedy run: the selection and the per-round score trace."""

    selection: Selection
    rounds: tuple[GreedyRound, ...]

    @property
    def lambda_bar(self) -> float:
        """Score of the completed selection."""
        return self.rounds[-1].lambda_bar

    def to_csv(self) -> str:
        lines = ["round,chosen_index,lambda_bar"]
        for r in self.rounds:
            lines.append(f"{r.round},{r.chosen},{r.lambda_bar:.12g}")
        return "\n".join(lines) + "\n"


def _subset_without_replacement(rng: RngStream, n_c: int, k: int) -> tuple[int, ...]:
    """``k`` distinct 1-based indices, uniform over subsets; consumes ``k`` variates.

    Partial Fisher-Yates over the index array: variate ``i`` picks the
    element swapped into slot ``i``, so the draw count is exactly ``k``
    regardless of pool size.
    """
    idx = np.arange(1, n_c + 1)
    u = rng.uniforms(k)
    for i in range(k):
        j = min(i + int(u[i] * (n_c - i)), n_c - 1)
        idx[i], idx[j] = idx[j], idx[i]
    return tuple(sorted(int(v) for v in idx[:k]))


def _score(
    theta: np.ndarray, system: LtiSystem, warm: np.ndarray | None
) -> tuple[float, np.ndarray | None]:
    """Worst-case steady error of a selection with summed information ``theta``.

    Returns ``(+inf, None)`` when the fixed point does not exist (pair
    undetectable) or the iteration breaks down numerically, which the
    greedy loop treats as "never pick this".
    """
    try:
        fixed = steady_state(theta, system, P0=warm)
    except (DetectabilityError, ConvergenceError, SingularMatrixError):
        return math.inf, None
    return matrices.max_eigenvalue(fixed.P), fixed.P


def greedy_select(
    config: GreedyConfig,
    pool: SensorPool,
    system: LtiSystem,
    *,
    workers: int = 1,
) -> GreedyResult:
    """Build a selection greedily, one candidate per round.

    Round ``r`` scores each considered candidate ``g`` by the largest
    eigenvalue of the steady-state covariance of the current selection
    augmented with ``g`` and appends the minimizer (ties resolve to the
    lowest index).  The fixed-point iteration warm-starts from the previous
    round's solution.  ``workers > 1`` scores a round's candidates in a
    thread pool; the pick is made by index order afterwards, so results
    match the sequential run.

    Raises
    ------
    DetectabilityError
        If every candidate scored in the first round yields an
        undetectable pair — no single-sensor selection can anchor the
        recursion, so the greedy construction cannot start.
    """
    n_c = pool.n_c
    chosen: list[int] = []
    rounds: list[GreedyRound] = []
    theta = np.zeros((pool.m, pool.m))
    warm: np.ndarray | None = None
    k = config.subset_size(n_c)
    for r in range(1, int(config.n_s) + 1):
        if config.gamma < 1.0:
            subset = _subset_without_replacement(config.rng, n_c, k)
        else:
            subset = tuple(range(1, n_c + 1))
        thetas = [theta + pool.info_matrix(g) for g in subset]
        if int(workers) > 1:
            with ThreadPoolExecutor(max_workers=int(workers)) as ex:
                scored = list(ex.map(lambda t: _score(t, system, warm), thetas))
        else:
            scored = [_score(t, system, warm) for t in thetas]
        best = min(range(len(subset)), key=lambda i: scored[i][0])
        score, fixed = scored[best]
        if math.isinf(score):
            raise DetectabilityError(
                f"every candidate scored in round {r} leaves the pair "
                "undetectable; the pool cannot anchor a greedy selection"
            )
        g = subset[best]
        chosen.append(g)
        theta = thetas[best]
        warm = fixed
        rounds.append(GreedyRound(round=r, subset=subset, chosen=g, lambda_bar=score))
    return GreedyResult(
        selection=Selection(indices=tuple(chosen), kind="greedy"),
        rounds=tuple(rounds),
    )
