"""Counter-based Gaussian streams.

Every replication owns a fixed window of a Philox stream keyed by
``(seed, stream)``: replication ``i`` always reads the same raw words no
matter how replications are grouped into blocks or spread over workers.

Uniforms are built from the top 52 bits of each raw word as
``u = (k + 1/2) / 2**52`` (strictly inside (0, 1), symmetric under
``u -> 1 - u``) and mapped to normals with the inverse normal CDF.
"""

import numpy as np
from scipy.special import ndtri

# stream identifiers (second half of the Philox key)
PATHS = 0
KS_SINH = 1
KS_CLOCK = 2

_MASK64 = (1 << 64) - 1
_SCALE = 2.0 ** -52


def _words(width):
    # Philox emits 4 words per counter step; pad so windows start on a step.
    return -(-width // 4) * 4


def uniforms(seed, stream, start, count, width):
    """Uniforms on (0, 1) for replications ``start .. start + count - 1``."""
    if count == 0 or width == 0:
        return np.empty((count, width))
    words = _words(width)
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=int(start) * (words // 4))
    raw = bg.random_raw(count * words).reshape(count, words)[:, :width]
    raw >>= np.uint64(12)
    u = raw.astype(np.float64)
    u += 0.5
    u *= _SCALE
    return u


def normals(seed, stream, start, count, width):
    """Standard normals, one row of ``width`` values per replication."""
    u = uniforms(seed, stream, start, count, width)
    return ndtri(u, out=u)
