"""Random benchmark instances: dense uniform dynamics, rank-one sensors.

An instance is a dynamics matrix with independent uniform entries on
[0, 1), a pool of candidate rows drawn the same way, a shared measurement
variance, and isotropic process noise.  Entries on [0, 1) make the
dynamics generically unstable (the dominant eigenvalue of a positive
matrix tracks its row sums), which is the interesting regime: estimation
quality then genuinely depends on which sensors are drawn.  The support
choice is a convention — rescaling the dynamics rescales every result
without changing any qualitative comparison — and can be overridden by
pinning the spectral radius.

Generation retries until every (dynamics, candidate-row) pair passes the
detectability screen, so each draw of the returned pool admits a bounded
steady-state error.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, GenerationError
from .sampling import RngStream
from .system import LtiSystem, SensorPool, pbh_detectable

# Retry budget before instance generation gives up.
MAX_REGENERATIONS = 100


def generate_instance(
    m: int,
    n_c: int,
    rng: RngStream,
    *,
    sigma2: float = 0.5,
    q_scale: float = 0.5,
    spectral_radius: float | None = None,
    max_regenerations: int = MAX_REGENERATIONS,
) -> tuple[LtiSystem, SensorPool]:
    """Draw a system and candidate pool with every sensor pair detectable.

    Each attempt consumes exactly ``m*m + n_c*m`` variates (dynamics first,
    then candidate rows in index order), so instances replay bit-exactly
    from the stream identity.  An attempt is accepted when every pair
    ``(A, c_i)`` is detectable; otherwise everything is redrawn.

    Parameters
    ----------
    spectral_radius : float, optional
        When given, the dynamics matrix is rescaled to this spectral
        radius after drawing (the detectability screen runs on the
        rescaled matrix).

    Raises
    ------
    GenerationError
        After ``max_regenerations`` consecutive rejected attempts.
    """
    if int(m) < 1:
        raise DomainError(f"state dimension must be >= 1, got {m}")
    if int(n_c) < 1:
        raise DomainError(f"pool size must be >= 1, got {n_c}")
    if sigma2 <= 0.0:
        raise DomainError(f"measurement variance must be positive, got {sigma2}")
    if q_scale <= 0.0:
        raise DomainError(f"process-noise scale must be positive, got {q_scale}")
    if spectral_radius is not None and spectral_radius <= 0.0:
        raise DomainError(f"spectral radius must be positive, got {spectral_radius}")
    if int(max_regenerations) < 1:
        raise DomainError(f"retry budget must be >= 1, got {max_regenerations}")
    m, n_c = int(m), int(n_c)
    q = q_scale * np.eye(m)
    for _ in range(int(max_regenerations)):
        a = rng.uniforms(m * m).reshape(m, m)
        if spectral_radius is not None:
            radius = float(np.max(np.abs(np.linalg.eigvals(a))))
            if radius == 0.0:
                continue
            a = a * (spectral_radius / radius)
        rows = rng.uniforms(n_c * m).reshape(n_c, m)
        if all(pbh_detectable(a, rows[i]) for i in range(n_c)):
            system = LtiSystem(A=a, Q=q)
            pool = SensorPool.from_arrays(rows, np.full(n_c, float(sigma2)))
            return system, pool
    raise GenerationError(
        f"no instance with every sensor pair detectable in {max_regenerations} attempts "
        f"(m={m}, n_c={n_c})"
    )
