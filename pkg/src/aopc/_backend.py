"""Kernel backend selection.

The compiled extension is used when importable; setting ``AOPC_PURE_PYTHON=1``
forces the pure-Python reference.
"""
import os

from . import _core_py

if os.environ.get("AOPC_PURE_PYTHON", "") not in ("", "0"):
    core = _core_py
else:
    try:
        from . import _core as core
    except ImportError:  # extension not built
        core = _core_py

BACKEND = core.BACKEND


def available_backends():
    out = {"python": _core_py}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out
