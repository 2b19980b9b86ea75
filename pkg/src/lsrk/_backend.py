"""Select the kernel core at import time.

``LSRK_BACKEND`` chooses the implementation:

* ``auto`` (default): the compiled square Gram, which only evaluates the
  upper triangle, with numpy for the rectangular routines, where its
  vectorised ``exp`` wins (see ``benchmarks/bench_kernels.py``). Falls back
  to numpy entirely when the extension was not built.
* ``c``: every routine compiled; a missing build is an error.
* ``python``: the numpy fallback only.
"""
import os
from types import SimpleNamespace

from . import _kernels_py

_requested = os.environ.get("LSRK_BACKEND", "auto").lower()
if _requested not in ("auto", "c", "python"):
    raise ImportError(f"LSRK_BACKEND must be auto, c or python, got {_requested!r}")

try:
    from . import _kernels_c
except ImportError:
    if _requested == "c":
        raise
    _kernels_c = None

if _requested == "python" or _kernels_c is None:
    core, BACKEND = _kernels_py, "python"
elif _requested == "c":
    core, BACKEND = _kernels_c, "c"
else:
    core = SimpleNamespace(
        gram=_kernels_c.gram, cross_gram=_kernels_py.cross_gram, expansion=_kernels_py.expansion
    )
    BACKEND = "hybrid"

__all__ = ["core", "BACKEND"]
