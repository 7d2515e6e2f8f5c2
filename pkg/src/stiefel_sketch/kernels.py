"""Hot-loop kernels, compiled when available.

The Cython extension is used if it was built; otherwise the numpy fallback
is used. Set ``STIEFEL_SKETCH_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
countsketch_apply = _pykernels.countsketch_apply

if os.environ.get("STIEFEL_SKETCH_PURE") != "1":
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        countsketch_apply = _ckernels.countsketch_apply
        BACKEND = "cython"

__all__ = ["BACKEND", "countsketch_apply"]
