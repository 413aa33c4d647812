"""Selection drawing: seeded streams, categorical sampling, rejection loops.

Randomness flows through :class:`RngStream`, a counter-based generator with
an explicit (seed, stream) identity so every draw sequence can be replayed
bit-exactly and parallel trials get independent sub-streams without shared
state.  Index draws use inverse-transform sampling over a cached cdf — one
uniform variate and one binary search per index — so a homogeneous
selection of ``n_s`` sensors consumes exactly ``n_s`` variates.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .concentration import ConstraintSpec, cap_satisfaction_bound
from .errors import AssumptionError, DimensionError, DomainError, RejectionBudgetError
from .system import Partitioning, Selection, check_simplex

# Failure probability of the default rejection budget is below e^-50.
_BUDGET_LOG_MARGIN = 50.0
_FALLBACK_MAX_ATTEMPTS = 1_000_000


class RngStream:
    """Replayable uniform-variate stream.

    Identity is the pair ``(seed, stream)``; two streams with the same
    identity produce the same variates on any platform.  ``counter`` counts
    the variates handed out so far, which makes draw accounting testable.
    """

    algorithm_id = "philox4x64-seedseq"

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if int(stream) < 0:
            raise DomainError(f"stream index must be >= 0, got {stream}")
        self.seed = seed
        self.stream = int(stream)
        self.counter = 0
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "RngStream":
        """Independent stream derived from the same seed (e.g. one per trial)."""
        return RngStream(self.seed, stream=index)

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` variates, uniform on [0, 1)."""
        if n < 0:
            raise DomainError(f"cannot draw {n} variates")
        self.counter += int(n)
        return self._gen.random(int(n))

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"RngStream(seed={self.seed}, stream={self.stream}, "
            f"algorithm={self.algorithm_id}, counter={self.counter})"
        )


class CategoricalSampler:
    """Inverse-transform sampler over candidate indices 1..n_c.

    The cdf is cached once; each draw is a binary search, and
    zero-probability categories keep their slot in the cdf but can never be
    hit (their interval is empty).  The final cdf entry is pinned to
    exactly 1.0 so a variate arbitrarily close to 1 still maps to a valid
    index.
    """

    def __init__(self, distribution: Sequence[float]):
        p = check_simplex(distribution)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        self.distribution = p
        self.cdf = cdf

    @property
    def n_c(self) -> int:
        return self.distribution.size

    @property
    def support(self) -> np.ndarray:
        """1-based indices with positive probability."""
        return np.flatnonzero(self.distribution > 0.0) + 1

    def draw(self, rng: RngStream, n: int) -> np.ndarray:
        """``n`` i.i.d. 1-based indices; consumes exactly ``n`` variates."""
        u = rng.uniforms(n)
        return np.searchsorted(self.cdf, u, side="right").astype(int) + 1


def draw_homogeneous(sampler: CategoricalSampler, n_s: int, rng: RngStream) -> Selection:
    """One selection of ``n_s`` i.i.d. indices (sampling with replacement)."""
    if int(n_s) < 1:
        raise DomainError(f"selection size must be >= 1, got {n_s}")
    idx = sampler.draw(rng, int(n_s))
    return Selection(indices=tuple(int(i) for i in idx), kind="homogeneous")


def draw_constrained(
    sampler: CategoricalSampler,
    n_s: int,
    spec: ConstraintSpec,
    rng: RngStream,
    max_attempts: int | None = None,
) -> Selection:
    """Redraw whole selections until every per-candidate cap is respected.

    Each attempt draws ``n_s`` indices and verifies the caps with a single
    counting pass.  The returned selection records the number of attempts.
    When no ``max_attempts`` is given the budget is ``ceil(50 / alpha)``
    using the cap-satisfaction bound, so the budget is exceeded with
    probability below ``e^-50``; a non-positive bound falls back to 10^6.

    Raises
    ------
    AssumptionError
        If the sample size does not fit the cap window.
    RejectionBudgetError
        If no admissible selection appears within the budget; carries the
        cap-satisfaction bound and its implied expected attempt count.
    """
    n = int(n_s)
    if spec.n_c != sampler.n_c:
        raise DimensionError(
            f"constraint spec covers {spec.n_c} candidates, sampler has {sampler.n_c}"
        )
    if not spec.admits(n):
        raise AssumptionError(
            f"sample count {n} outside the admissible cap window "
            f"[{spec.max_cap}, {spec.cap_sum}]"
        )
    alpha = None
    if max_attempts is None:
        alpha = cap_satisfaction_bound(spec, n, sampler.distribution)
        if alpha > 0.0:
            max_attempts = int(math.ceil(_BUDGET_LOG_MARGIN / alpha))
        else:
            max_attempts = _FALLBACK_MAX_ATTEMPTS
    caps = np.asarray(spec.caps, dtype=int)
    for attempt in range(1, int(max_attempts) + 1):
        idx = sampler.draw(rng, n)
        counts = np.bincount(idx - 1, minlength=spec.n_c)
        if np.all(counts <= caps):
            return Selection(
                indices=tuple(int(i) for i in idx),
                kind="constrained",
                rejection_count=attempt,
            )
    if alpha is None:
        alpha = cap_satisfaction_bound(spec, n, sampler.distribution)
    raise RejectionBudgetError(
        f"no cap-respecting selection within {max_attempts} attempts", alpha=alpha
    )


def draw_heterogeneous(
    part: Partitioning, samplers: Sequence[CategoricalSampler], rng: RngStream
) -> Selection:
    """Concatenate independent homogeneous draws, one per partition group.

    ``samplers[i]`` is a law over group ``i+1``'s local indices; the drawn
    local indices are shifted by the group's start offset so the result
    indexes the full pool.
    """
    if len(samplers) != part.K:
        raise DimensionError(f"{len(samplers)} samplers for {part.K} groups")
    indices: list[int] = []
    for i, sampler in enumerate(samplers, start=1):
        if sampler.n_c != part.candidate_counts[i - 1]:
            raise DimensionError(
                f"group {i} sampler covers {sampler.n_c} candidates, "
                f"partitioning says {part.candidate_counts[i - 1]}"
            )
        offset = part.start(i) - 1
        local = sampler.draw(rng, part.sample_counts[i - 1])
        indices.extend(int(j) + offset for j in local)
    return Selection(indices=tuple(indices), kind="heterogeneous")


def format_indices(sel: Selection) -> str:
    """One-line export: 1-based indices, space-separated."""
    return " ".join(str(i) for i in sel.indices)


def parse_indices(line: str, kind: str = "homogeneous") -> Selection:
    """Inverse of :func:`format_indices` (rejection counts are not encoded)."""
    try:
        idx = tuple(int(tok) for tok in line.split())
    except ValueError as exc:
        raise DomainError(f"malformed index line: {line!r}") from exc
    return Selection(indices=idx, kind=kind)
