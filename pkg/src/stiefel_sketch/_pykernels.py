"""Pure-numpy fallbacks for the compiled kernels."""

import numpy as np


def countsketch_apply(Z, h, g, s):
    """Accumulate ``g[j] * Z[j, :]`` into row ``h[j]`` of an ``s x d`` output.

    ``np.add.at`` is unbuffered and walks the indices in order, which gives
    the same summation order (and bits) as the compiled loop.
    """
    if h.shape[0] != Z.shape[0] or g.shape[0] != Z.shape[0]:
        raise ValueError("hash/sign length does not match the row count")
    out = np.zeros((s, Z.shape[1]), dtype=np.float64)
    np.add.at(out, h, g[:, None] * Z)
    return out
