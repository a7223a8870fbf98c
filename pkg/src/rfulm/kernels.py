"""Hot loops with a compiled backend and a NumPy fallback.

The Cython extension ``rfulm._kernels`` is used when it was built; otherwise
the pure-Python module is imported. Set ``RFULM_PURE_PYTHON=1`` to force the
fallback. Both backends produce identical results up to float association.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("RFULM_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py

im2col = _impl.im2col
col2im = _impl.col2im
das_sum = _impl.das_sum
nms = _impl.nms
