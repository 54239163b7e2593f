"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``TELESCHED_PURE=1`` to force the fallback.
"""
import os

from telesched import _pycore

if os.environ.get("TELESCHED_PURE"):
    _core = None
else:
    try:
        from telesched import _core
    except ImportError:  # extension not built
        _core = None

COMPILED = _core is not None
kernels = _core if COMPILED else _pycore


def get(name: str, *, pure: bool = False):
    """Kernel ``name`` from the selected backend, or the fallback if ``pure``."""
    return getattr(_pycore if pure or not COMPILED else _core, name)
