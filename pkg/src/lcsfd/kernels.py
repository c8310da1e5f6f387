"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise, or
when ``LCSFD_PURE_PYTHON=1`` is set, the numpy fallback ``_pykernels`` is used.
"""

import os

from . import _pykernels

if os.environ.get("LCSFD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

msd_rk4 = _impl.msd_rk4
affine_recursion = _impl.affine_recursion
sqdist_lower = _impl.sqdist_lower
se_cross = _impl.se_cross
noe_run = _impl.noe_run

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _ckernels

        BACKENDS["cython"] = _ckernels
    except ImportError:
        pass
