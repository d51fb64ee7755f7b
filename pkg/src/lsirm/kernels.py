"""Hot-loop kernels, compiled when available.

The compiled extension is preferred; set ``LSIRM_PURE_PYTHON=1`` to force the
numpy fallback. ``BACKEND`` names the implementation in use.
"""

import os

from . import _kernels_py

if os.environ.get("LSIRM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

distance_matrix = _impl.distance_matrix
cell_loglik = _impl.cell_loglik
