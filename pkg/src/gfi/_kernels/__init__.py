"""Kernel backend selection.

The hot inner loops (dense/sparse matmul, attention, topology filter) have
two interchangeable implementations: numba-jitted scalar loops and a pure
numpy fallback.  Both follow the same canonical float32 accumulation order,
so results are bit-identical.

Selection, at import time:
  GFI_KERNELS=numba   force numba (ImportError if unavailable)
  GFI_KERNELS=numpy   force the numpy fallback
  unset               numba when importable, else numpy

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_requested = os.environ.get("GFI_KERNELS", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(f"GFI_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from . import numpy_impl as _impl

    BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_impl as _impl

    BACKEND = "numba"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        BACKEND = "numpy"

matmul = _impl.matmul
spmm = _impl.spmm
gat_head = _impl.gat_head
topo_filter = _impl.topo_filter
