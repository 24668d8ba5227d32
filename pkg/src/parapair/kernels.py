"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly; otherwise, or when
``PARAPAIR_PURE=1`` is set, the numpy/pure-Python versions take over.  Both
expose the same functions with the same semantics.
"""

import os

from . import _kernels_py

_compiled = None
if os.environ.get("PARAPAIR_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
levenshtein = _impl.levenshtein
lcs_length = _impl.lcs_length
ter_greedy = _impl.ter_greedy
shift_floor = _kernels_py.shift_floor


def backends():
    """Map of available backend name -> kernel module (for tests and benchmarks)."""
    found = {"python": _kernels_py}
    if _compiled is not None:
        found["compiled"] = _compiled
    elif os.environ.get("PARAPAIR_PURE", "") in ("1", "true", "yes"):
        try:
            from . import _ckernels
            found["compiled"] = _ckernels
        except ImportError:
            pass
    return found
