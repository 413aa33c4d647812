"""Plant model, candidate-sensor pool, and selection bookkeeping.

A :class:`LtiSystem` is the noisy linear plant whose state covariance the
Kalman recursions track.  A :class:`SensorPool` holds the candidate sensors
available for selection, each a row vector paired with a scalar noise
variance; the pool caches every candidate's information matrix
``Z_j = c_j c_j^T / sigma_j^2``.  A :class:`Selection` is an ordered index
sequence into the pool (repeats allowed), and a :class:`Partitioning` splits
the pool into contiguous groups for groupwise selection.

Indices are 1-based everywhere a human sees them — selections, partition
boundaries, error messages, file formats.  Conversion to 0-based happens
only at the array-access boundary inside this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import matrices
from .errors import (
    DetectabilityError,
    DimensionError,
    DomainError,
    InvalidInputError,
    SimplexError,
)

SELECTION_KINDS = ("homogeneous", "heterogeneous", "constrained", "greedy")

# Eigenvalues this close to the unit circle count as unstable for the
# detectability test, so marginally stable modes are not missed to round-off.
_UNIT_CIRCLE_TOL = 1e-9


def check_simplex(p: Sequence[float], n: int | None = None) -> np.ndarray:
    """Validate a probability vector and return it as a float array.

    Entries must be finite and >= 0 and must sum to 1 within 1e-9.  When
    ``n`` is given the length must match.  Raises :class:`SimplexError`
    otherwise.
    """
    arr = np.asarray(p, dtype=float).reshape(-1)
    if n is not None and arr.size != n:
        raise SimplexError(f"distribution has {arr.size} entries, expected {n}")
    if arr.size == 0:
        raise SimplexError("distribution is empty")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("distribution contains non-finite entries")
    if float(arr.min()) < 0.0:
        raise SimplexError(f"distribution has a negative entry ({float(arr.min()):.3e})")
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-9:
        raise SimplexError(f"distribution sums to {total!r}, not 1")
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant ``x(t+1) = A x(t) + w(t)`` with ``w ~ N(0, Q)``.

    ``Q`` must be positive definite; that keeps every predicted covariance
    invertible and is what the steady-state uniqueness results lean on.
    """

    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.A, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"state matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("state matrix contains non-finite entries")
        q = matrices.as_symmetric(self.Q)
        if q.shape != a.shape:
            raise DimensionError("process-noise covariance order does not match state matrix")
        w = np.linalg.eigvalsh(q)
        if float(w[0]) <= matrices.RANK_CUTOFF * max(1.0, float(w[-1])):
            raise InvalidInputError("process-noise covariance must be positive definite")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "Q", q)

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class CandidateSensor:
    """One scalar-output candidate: row vector ``c`` and noise variance ``sigma2``."""

    c: np.ndarray
    sigma2: float

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise InvalidInputError("sensor row must be a finite non-empty vector")
        s2 = float(self.sigma2)
        if not s2 > 0.0 or not np.isfinite(s2):
            raise InvalidInputError(f"sensor noise variance must be positive, got {self.sigma2}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma2", s2)

    @property
    def information(self) -> np.ndarray:
        """Rank-one information matrix ``c c^T / sigma2``."""
        return np.outer(self.c, self.c) / self.sigma2


class SensorPool:
    """Immutable ordered pool of candidate sensors.

    Candidates must be pairwise distinct as ingested ``(c, sigma2)`` pairs
    (exact equality — the uniqueness requirement is definitional, not
    metric).  The stacked output matrix, variance vector, and information
    matrices are cached on construction.
    """

    def __init__(self, sensors: Iterable[CandidateSensor]):
        sensors = tuple(sensors)
        if not sensors:
            raise InvalidInputError("sensor pool is empty")
        m = sensors[0].c.size
        seen = set()
        for j, s in enumerate(sensors, start=1):
            if s.c.size != m:
                raise DimensionError(f"sensor {j} has length {s.c.size}, expected {m}")
            key = (s.c.tobytes(), s.sigma2)
            if key in seen:
                raise InvalidInputError(f"sensor {j} duplicates an earlier (c, sigma2) pair")
            seen.add(key)
        self._sensors = sensors
        self._C = np.vstack([s.c for s in sensors])
        self._sigma2 = np.array([s.sigma2 for s in sensors])
        z = self._C[:, :, None] * self._C[:, None, :] / self._sigma2[:, None, None]
        z.setflags(write=False)
        self._C.setflags(write=False)
        self._sigma2.setflags(write=False)
        self._Z = z

    @classmethod
    def from_arrays(cls, C: np.ndarray, sigma2: Sequence[float]) -> "SensorPool":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        s2 = np.asarray(sigma2, dtype=float).reshape(-1)
        if C.shape[0] != s2.size:
            raise DimensionError("one noise variance required per sensor row")
        return cls(CandidateSensor(row, var) for row, var in zip(C, s2))

    def __len__(self) -> int:
        return len(self._sensors)

    def __iter__(self):
        return iter(self._sensors)

    def __getitem__(self, j: int) -> CandidateSensor:
        """1-based candidate access."""
        self._check_index(j)
        return self._sensors[j - 1]

    @property
    def n_c(self) -> int:
        return len(self._sensors)

    @property
    def m(self) -> int:
        return self._C.shape[1]

    @property
    def rows(self) -> np.ndarray:
        """All candidate rows stacked, shape (n_c, m)."""
        return self._C

    @property
    def variances(self) -> np.ndarray:
        return self._sigma2

    @property
    def information(self) -> np.ndarray:
        """Stacked information matrices, shape (n_c, m, m)."""
        return self._Z

    def info_matrix(self, j: int) -> np.ndarray:
        """Information matrix of candidate ``j`` (1-based)."""
        self._check_index(j)
        return self._Z[j - 1]

    def _check_index(self, j: int) -> None:
        if not 1 <= int(j) <= self.n_c:
            raise DomainError(f"candidate index {j} outside [1, {self.n_c}]")


@dataclass(frozen=True)
class Selection:
    """Ordered sequence of 1-based candidate indices, repeats allowed.

    ``rejection_count`` records how many raw draws a constrained sampler
    needed and must be present exactly when ``kind == "constrained"``.
    """

    indices: tuple[int, ...]
    kind: str = "homogeneous"
    rejection_count: int | None = None

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise DomainError("selection indices are 1-based and must be >= 1")
        if self.kind not in SELECTION_KINDS:
            raise InvalidInputError(f"unknown selection kind {self.kind!r}")
        if self.kind == "constrained":
            if self.rejection_count is None or int(self.rejection_count) < 1:
                raise InvalidInputError("constrained selections must carry rejection_count >= 1")
            object.__setattr__(self, "rejection_count", int(self.rejection_count))
        elif self.rejection_count is not None:
            raise InvalidInputError("rejection_count is only meaningful for constrained selections")
        object.__setattr__(self, "indices", idx)

    @property
    def n_s(self) -> int:
        return len(self.indices)

    def as_zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int) - 1


@dataclass(frozen=True)
class Partitioning:
    """Contiguous split of the candidate range [1, n_c] into K groups.

    Group i covers candidates ``start(i) .. stop(i)`` inclusive (1-based),
    draws ``sample_counts[i]`` selections, and gets failure budget
    ``confidences[i]``.
    """

    candidate_counts: tuple[int, ...]
    sample_counts: tuple[int, ...]
    confidences: tuple[float, ...]

    def __post_init__(self) -> None:
        ncs = tuple(int(v) for v in self.candidate_counts)
        nss = tuple(int(v) for v in self.sample_counts)
        deltas = tuple(float(v) for v in self.confidences)
        if not ncs:
            raise InvalidInputError("partitioning needs at least one group")
        if len(nss) != len(ncs) or len(deltas) != len(ncs):
            raise DimensionError("per-group counts and confidences must have equal length")
        if any(v < 1 for v in ncs):
            raise DomainError("each group must contain at least one candidate")
        if any(v < 1 for v in nss):
            raise DomainError("each group must draw at least one selection")
        if any(not 0.0 < d < 1.0 for d in deltas):
            raise DomainError("group confidences must lie in (0, 1)")
        object.__setattr__(self, "candidate_counts", ncs)
        object.__setattr__(self, "sample_counts", nss)
        object.__setattr__(self, "confidences", deltas)

    @classmethod
    def even(cls, n_c: int, n_s: int, K: int, delta: float) -> "Partitioning":
        """Equal-size split with the failure budget spread so the overall
        success floor is exactly ``1 - delta``:  per-group confidence
        ``1 - (1 - delta)^(1/K)``.
        """
        K = int(K)
        if K < 1:
            raise DomainError(f"number of groups must be >= 1, got {K}")
        if n_c % K or n_s % K:
            raise DomainError(
                f"even partitioning needs K | n_c and K | n_s, got n_c={n_c}, n_s={n_s}, K={K}"
            )
        if not 0.0 < delta < 1.0:
            raise DomainError(f"confidence budget must lie in (0, 1), got {delta}")
        d_i = 1.0 - (1.0 - delta) ** (1.0 / K)
        return cls((n_c // K,) * K, (n_s // K,) * K, (d_i,) * K)

    @property
    def K(self) -> int:
        return len(self.candidate_counts)

    @property
    def n_c(self) -> int:
        return sum(self.candidate_counts)

    @property
    def n_s(self) -> int:
        return sum(self.sample_counts)

    def start(self, i: int) -> int:
        """First candidate index of group ``i`` (both 1-based)."""
        self._check_group(i)
        return 1 + sum(self.candidate_counts[: i - 1])

    def stop(self, i: int) -> int:
        """Last candidate index of group ``i`` (both 1-based, inclusive)."""
        self._check_group(i)
        return sum(self.candidate_counts[:i])

    def group_slice(self, i: int) -> slice:
        """0-based slice selecting group ``i`` out of stacked candidate arrays."""
        return slice(self.start(i) - 1, self.stop(i))

    def group_of(self, j: int) -> int:
        """Group containing candidate ``j`` (both 1-based)."""
        if not 1 <= int(j) <= self.n_c:
            raise DomainError(f"candidate index {j} outside [1, {self.n_c}]")
        acc = 0
        for i, size in enumerate(self.candidate_counts, start=1):
            acc += size
            if j <= acc:
                return i
        raise AssertionError("unreachable")  # pragma: no cover

    def _check_group(self, i: int) -> None:
        if not 1 <= int(i) <= self.K:
            raise DomainError(f"group index {i} outside [1, {self.K}]")


def assemble_output(pool: SensorPool, sel: Selection) -> tuple[np.ndarray, np.ndarray]:
    """Stack the selected rows into an output pair ``(C, R)``.

    Row ``i`` of ``C`` is the row of candidate ``sel.indices[i]`` and ``R``
    is the diagonal matrix of the matching noise variances, so
    ``C^T R^{-1} C`` equals the summed information of the selection.
    """
    for j in sel.indices:
        pool._check_index(j)
    idx = sel.as_zero_based()
    C = pool.rows[idx].reshape(len(idx), pool.m)
    R = np.diag(pool.variances[idx])
    return C, R


def selection_information(pool: SensorPool, sel: Selection) -> np.ndarray:
    """Summed information matrix of a selection, ``sum_i Z_{S_i}``."""
    for j in sel.indices:
        pool._check_index(j)
    if sel.n_s == 0:
        return np.zeros((pool.m, pool.m))
    return matrices.symmetrize(pool.information[sel.as_zero_based()].sum(axis=0))


def expected_information(pool: SensorPool, p: Sequence[float]) -> np.ndarray:
    """Mean per-draw information ``sum_j p_j Z_j`` under sampling law ``p``."""
    arr = check_simplex(p, pool.n_c)
    return matrices.symmetrize(np.tensordot(arr, pool.information, axes=1))


def pbh_detectable(A: np.ndarray, C: np.ndarray) -> bool:
    """Detectability of the pair ``(A, C)`` by the eigenvector rank test.

    For every eigenvalue ``lam`` of ``A`` on or outside the unit circle the
    stacked matrix ``[lam I - A; C]`` must have full column rank; stable
    modes need no observation.  Rank is counted from singular values with a
    relative cutoff.
    """
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"state matrix must be square, got shape {a.shape}")
    m = a.shape[0]
    c = np.atleast_2d(np.asarray(C, dtype=float))
    if c.size == 0:
        c = c.reshape(0, m)
    if c.shape[1] != m:
        raise DimensionError(f"output matrix has {c.shape[1]} columns, state order is {m}")
    eye = np.eye(m)
    for lam in np.linalg.eigvals(a):
        if abs(lam) < 1.0 - _UNIT_CIRCLE_TOL:
            continue
        stacked = np.vstack([lam * eye - a, c.astype(complex)])
        s = np.linalg.svd(stacked, compute_uv=False)
        cutoff = matrices.RANK_CUTOFF * float(s[0]) if s.size else 0.0
        if int(np.count_nonzero(s > cutoff)) < m:
            return False
    return True


def information_detectable(system: LtiSystem, info: np.ndarray) -> bool:
    """Detectability of ``(A, info^{1/2})`` for a PSD information matrix."""
    return pbh_detectable(system.A, matrices.sqrt_psd(info))


@dataclass(frozen=True)
class DetectabilityReport:
    """Outcome of the sufficient-condition screen for a pool and sampling law."""

    per_candidate: tuple[bool, ...]
    all_candidates_detectable: bool
    mixture_detectable: bool
    satisfied_condition: str  # "all-candidates" | "mixture-only" | "none"
    warnings: tuple[str, ...] = ()


def check_detectability_conditions(
    system: LtiSystem, pool: SensorPool, p: Sequence[float]
) -> DetectabilityReport:
    """Screen the standing detectability assumptions for a pool and law ``p``.

    Checks (a) detectability of each single candidate pair and (b) of the
    mixture pair ``(A, E[Z]^{1/2})``.  When every candidate passes, every
    possible selection is detectable and the strongest sufficient condition
    holds.  When only the mixture passes, bounds that depend on the mixture
    are safe but individual selections may not be; a warning says so.  When
    neither passes no guarantee applies and the report warns rather than
    guessing.
    """
    per = tuple(bool(pbh_detectable(system.A, s.c)) for s in pool)
    all_ok = all(per)
    mix_ok = bool(information_detectable(system, expected_information(pool, p)))
    warnings: list[str] = []
    if all_ok:
        condition = "all-candidates"
    elif mix_ok:
        condition = "mixture-only"
        bad = [str(j) for j, ok in enumerate(per, start=1) if not ok]
        warnings.append(
            "candidates {" + ", ".join(bad) + "} are individually undetectable; "
            "selections avoiding the rest may have unbounded error — consider an anchor selection"
        )
    else:
        condition = "none"
        warnings.append(
            "neither every candidate nor the mixture is detectable; "
            "no steady-state guarantee applies to this pool and law"
        )
    return DetectabilityReport(per, all_ok, mix_ok, condition, tuple(warnings))


def augment_selection(
    sel: Selection,
    anchor: Selection,
    *,
    pool: SensorPool | None = None,
    system: LtiSystem | None = None,
) -> Selection:
    """Concatenate an anchor selection onto ``sel``, preserving its kind.

    When ``pool`` and ``system`` are supplied, a non-empty anchor must make
    ``(A, C_anchor)`` detectable — that is the whole point of anchoring —
    and a :class:`DetectabilityError` is raised otherwise.
    """
    if anchor.n_s == 0:
        return sel
    if pool is not None and system is not None:
        C_a, _ = assemble_output(pool, anchor)
        if not pbh_detectable(system.A, C_a):
            raise DetectabilityError("anchor selection does not make the pair (A, C) detectable")
    return Selection(
        indices=sel.indices + anchor.indices,
        kind=sel.kind,
        rejection_count=sel.rejection_count,
    )
