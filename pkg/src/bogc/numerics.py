"""Dense linear algebra and seeded Gaussian sampling.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects; functions that accept a batch of matrices treat the
last two axes as the matrix axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, NotPositiveDefinite

JITTER_START = 1e-8
JITTER_MAX = 1e-2
JITTER_FACTOR = 10.0
MAX_DIM = 256

_SYM_RTOL = 1e-12


@dataclass
class SeededRng:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Two instances with the same pair produce the same draws regardless of how
    many other streams exist or in which order they are consumed.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def stream(self, stream_id: int) -> "SeededRng":
        """Return an independent stream sharing this seed."""
        return SeededRng(self.seed, stream_id)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def standard_normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected SeededRng or numpy Generator, got {type(rng).__name__}")


def check_square(m: np.ndarray) -> int:
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {m.shape}")
    return m.shape[-1]


def is_symmetric(m: np.ndarray, rtol: float = _SYM_RTOL) -> bool:
    scale = max(float(np.max(np.abs(m), initial=0.0)), 1e-300)
    return bool(np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0) <= rtol * scale)


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Exactly symmetric part of ``m`` (``(m + m.T) / 2`` is bitwise symmetric)."""
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def cholesky_with_jitter(
    m: np.ndarray,
    jitter: float = 0.0,
    max_jitter: float = JITTER_MAX,
) -> tuple[np.ndarray, float]:
    """Factor ``m + j*I`` and return ``(L, j)``.

    With ``jitter == 0`` a single strict attempt is made. Otherwise ``j``
    starts at ``jitter`` and is multiplied by ten until the factorization
    succeeds or ``j`` exceeds ``max_jitter``.
    """
    m = np.asarray(m, dtype=float)
    k = check_square(m)
    if m.ndim != 2:
        raise DimensionMismatch("batched input: use cholesky_batch")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    if not is_symmetric(m):
        raise ValueError("matrix is not symmetric")
    eye = np.eye(k)
    j = float(jitter)
    while True:
        try:
            return np.linalg.cholesky(m + j * eye), j
        except np.linalg.LinAlgError:
            pass
        if j == 0.0 or j * JITTER_FACTOR > max_jitter * (1 + 1e-12):
            raise NotPositiveDefinite(
                f"{k}x{k} matrix not positive definite (last jitter {j:.1e})"
            )
        j *= JITTER_FACTOR


def cholesky(m: np.ndarray, jitter: float = 0.0, max_jitter: float = JITTER_MAX) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m + jitter*I``."""
    return cholesky_with_jitter(m, jitter, max_jitter)[0]


def cholesky_batch(
    ms: np.ndarray,
    jitter: float = JITTER_START,
    max_jitter: float = JITTER_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`cholesky_with_jitter` over the leading axis of ``ms``.

    Returns the stacked factors and the jitter applied to each matrix.
    """
    ms = np.asarray(ms, dtype=float)
    k = check_square(ms)
    eye = np.eye(k)
    try:
        factors = np.linalg.cholesky(ms + jitter * eye)
        return factors, np.full(ms.shape[:-2], float(jitter))
    except np.linalg.LinAlgError:
        pass
    flat = ms.reshape(-1, k, k)
    out = np.empty_like(flat)
    used = np.empty(flat.shape[0])
    for idx, m in enumerate(flat):
        out[idx], used[idx] = cholesky_with_jitter(m, jitter, max_jitter)
    return out.reshape(ms.shape), used.reshape(ms.shape[:-2])


def invert_spd(m: np.ndarray, jitter: float = 0.0, max_jitter: float = JITTER_MAX) -> np.ndarray:
    """Inverse of the symmetric positive definite matrix ``m + jitter*I``."""
    L = cholesky(m, jitter, max_jitter)
    inv = sla.cho_solve((L, True), np.eye(L.shape[0]))
    return symmetrize(inv)


def inverse_diagonal_from_factor(L: np.ndarray) -> np.ndarray:
    """Diagonal of ``(L @ L.T)^-1`` for (batched) lower-triangular ``L``."""
    Linv = np.linalg.inv(L)
    return np.sum(Linv * Linv, axis=-2)


def sample_gaussian(mean: np.ndarray, chol_factor: np.ndarray, rng, size=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``z`` standard normal.

    ``size`` adds leading sample axes; ``size=None`` returns one vector.
    """
    mean = np.asarray(mean, dtype=float)
    L = np.asarray(chol_factor, dtype=float)
    if mean.ndim != 1 or L.shape != (mean.shape[0], mean.shape[0]):
        raise DimensionMismatch(
            f"mean shape {mean.shape} incompatible with factor shape {L.shape}"
        )
    shape = () if size is None else (size if isinstance(size, tuple) else (size,))
    z = _as_generator(rng).standard_normal(shape + mean.shape)
    return mean + z @ L.T
