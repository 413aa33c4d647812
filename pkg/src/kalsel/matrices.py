"""Dense symmetric-matrix algebra used throughout the package.

Covers positive-semidefinite tests, Loewner-order comparisons, extreme
eigenvalues, an eigendecomposition-based pseudo-inverse, the covariance
update/prediction maps of the Kalman recursions, a numerically stable
binomial pmf, and the probability clamp used by the constrained-selection
floors.

All functions treat matrices as plain ``numpy`` arrays.  Symmetry is
enforced on entry (inputs are mirrored, never trusted) and every matrix
result is symmetrized before it is returned, so eigensolver round-off
cannot accumulate across recursions.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, DomainError, InvalidInputError, SingularMatrixError

# Relative eigenvalue cutoff below which a direction counts as null space.
RANK_CUTOFF = 1e-10

# Default slack for Loewner comparisons; coverage experiments must not fail on ties.
LOEWNER_TOL = 1e-8

# Relative floor for the PSD membership test, scaled by the spectral radius.
PSD_TOL = 1e-9


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part 0.5*(M + M^T)."""
    a = np.asarray(m, dtype=float)
    return 0.5 * (a + a.T)


def as_symmetric(m: np.ndarray, *, tol: float = 1e-8) -> np.ndarray:
    """Validate and mirror a square matrix.

    Raises
    ------
    DimensionError
        If the input is not square.
    InvalidInputError
        If entries are non-finite or the asymmetry exceeds ``tol`` relative
        to the largest entry.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix contains non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > tol * scale:
        raise InvalidInputError("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_symmetric(m))[0])


def max_eigenvalue(m: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_symmetric(m))[-1])


def is_psd(m: np.ndarray) -> bool:
    """Positive-semidefinite test with a spectral-radius-relative floor."""
    w = np.linalg.eigvalsh(as_symmetric(m))
    floor = PSD_TOL * (1.0 + float(np.abs(w).max(initial=0.0)))
    return float(w[0]) >= -floor


def require_psd(m: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """Validate PSD membership and return the mirrored matrix."""
    a = as_symmetric(m)
    if not is_psd(a):
        raise InvalidInputError(f"{what} is not positive semi-definite")
    return a


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float = LOEWNER_TOL) -> bool:
    """True iff ``a`` precedes ``b`` in the Loewner order, i.e. B - A is PSD.

    ``tol`` is an absolute slack on the smallest eigenvalue of B - A so that
    boundary cases (A equal to B up to round-off) compare as ordered.
    """
    aa = as_symmetric(a)
    bb = as_symmetric(b)
    if aa.shape != bb.shape:
        raise DimensionError(f"order mismatch: {aa.shape} vs {bb.shape}")
    return min_eigenvalue(bb - aa) >= -tol


def spd_inverse(m: np.ndarray, *, what: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via eigendecomposition.

    Raises ``SingularMatrixError`` when the smallest eigenvalue is below the
    numerical-rank cutoff, i.e. the matrix is not invertible in practice.
    """
    a = as_symmetric(m)
    w, v = np.linalg.eigh(a)
    lead = float(w[-1])
    if lead <= 0.0 or float(w[0]) <= RANK_CUTOFF * lead:
        raise SingularMatrixError(f"{what} is numerically singular")
    return symmetrize((v / w) @ v.T)


def pseudo_inverse(m: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a PSD matrix.

    Eigenvalues below ``RANK_CUTOFF`` times the largest eigenvalue are
    treated as exact zeros; for positive-definite input this is the exact
    inverse.
    """
    a = require_psd(m, what="pseudo_inverse argument")
    w, v = np.linalg.eigh(a)
    lead = float(w[-1])
    if lead <= 0.0:
        return np.zeros_like(a)
    keep = w > RANK_CUTOFF * lead
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return symmetrize((v * inv_w) @ v.T)


def sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues that are negative by round-off are clamped to zero before
    taking the root.
    """
    a = require_psd(m, what="sqrt argument")
    w, v = np.linalg.eigh(a)
    return symmetrize((v * np.sqrt(np.clip(w, 0.0, None))) @ v.T)


def covariance_update(cov: np.ndarray, c: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Measurement update of a covariance matrix.

    Returns ``cov - cov C^T (R + C cov C^T)^{-1} C cov`` for an output map
    ``C`` and measurement-noise covariance ``R``.  Valid for any PSD ``cov``;
    the innovation matrix ``R + C cov C^T`` must be invertible.
    """
    p = as_symmetric(cov)
    cm = np.atleast_2d(np.asarray(c, dtype=float))
    rm = as_symmetric(r)
    if cm.shape[1] != p.shape[0]:
        raise DimensionError(f"output map has {cm.shape[1]} columns, state has order {p.shape[0]}")
    if rm.shape[0] != cm.shape[0]:
        raise DimensionError("noise covariance order does not match output rows")
    inner = as_symmetric(rm + cm @ p @ cm.T)
    w = np.linalg.eigvalsh(inner)
    if float(w[-1]) <= 0.0 or float(w[0]) <= RANK_CUTOFF * float(np.abs(w).max()):
        raise SingularMatrixError("innovation matrix is numerically singular")
    gain_core = np.linalg.solve(inner, cm @ p)
    return symmetrize(p - p @ cm.T @ gain_core)


def information_update(cov: np.ndarray, c: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Measurement update in information form: ``(cov^{-1} + C^T R^{-1} C)^{-1}``.

    Requires positive-definite ``cov`` and ``r``.  Agrees with
    :func:`covariance_update` on the common domain by the matrix inversion
    lemma.
    """
    p_inv = spd_inverse(cov, what="prior covariance")
    cm = np.atleast_2d(np.asarray(c, dtype=float))
    r_inv = spd_inverse(r, what="noise covariance")
    return spd_inverse(p_inv + cm.T @ r_inv @ cm, what="posterior information")


def predict_covariance(cov: np.ndarray, a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """One-step covariance prediction ``A cov A^T + Q``."""
    p = as_symmetric(cov)
    am = np.asarray(a, dtype=float)
    qm = as_symmetric(q)
    if am.shape != p.shape or qm.shape != p.shape:
        raise DimensionError("state matrix / process noise shape mismatch")
    return symmetrize(am @ p @ am.T + qm)


def riccati_step(cov: np.ndarray, info: np.ndarray, a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Filtered-covariance recursion ``((A cov A^T + Q)^{-1} + info)^{-1}``.

    ``info`` is the measurement information matrix added by one batch of
    observations.  ``Q`` must be positive definite so the predicted
    covariance stays invertible.
    """
    predicted = predict_covariance(cov, a, q)
    theta = require_psd(info, what="information matrix")
    pred_inv = spd_inverse(predicted, what="predicted covariance")
    return spd_inverse(pred_inv + theta, what="updated information")


def binomial_pmf(n: int, k: int, p: float) -> float:
    """Probability of exactly ``k`` successes out of ``n`` with success rate ``p``.

    Computed through log-gamma so sample counts in the tens of thousands do
    not overflow.  Degenerate rates 0 and 1 are handled exactly.
    """
    n = int(n)
    k = int(k)
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"success count {k} outside [0, {n}]")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"success probability {p} outside [0, 1]")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    log_pmf = (
        math.lgamma(n + 1)
        - math.lgamma(k + 1)
        - math.lgamma(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    return min(1.0, math.exp(log_pmf))


def binomial_cdf(n: int, k: int, p: float) -> float:
    """P[successes <= k]; exact accumulation of the pmf terms."""
    if k < 0:
        return 0.0
    return min(1.0, math.fsum(binomial_pmf(n, i, p) for i in range(0, min(k, n) + 1)))


def clamp_probability(gamma: float) -> float:
    """Clamp a would-be probability to [0, 1].

    Negative values map to 0; values in [0, 1] pass through.  Values above 1
    are a domain error because every bound fed to this clamp is at most 1 by
    construction.
    """
    g = float(gamma)
    if math.isnan(g) or g > 1.0:
        raise DomainError(f"clamp argument {gamma} exceeds 1")
    return g if g >= 0.0 else 0.0
