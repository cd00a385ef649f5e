"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``STRATRLHF_PURE=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("STRATRLHF_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

fit_bt = _impl.fit_bt
bt_objective = _impl.bt_objective

__all__ = ["BACKEND", "fit_bt", "bt_objective"]
