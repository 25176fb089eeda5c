"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``NCVE_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("NCVE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None

STATUS_OK = 0
STATUS_ZERO = 1
STATUS_DEPTH = 2

phi1 = _impl.phi1
gram_block = _impl.gram_block
expsum_eval = _impl.expsum_eval
char_det_batch = _impl.char_det_batch
segment_arg_change = _impl.segment_arg_change


def available_backends():
    """Mapping of backend name to kernel module, for parity tests and benchmarks."""
    out = {"python": _pykernels}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
