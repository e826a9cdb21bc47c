"""Kernel lane selection.

The hot inner loops live in a compiled Cython module when available; a pure
NumPy reference lane provides the same functions otherwise.  Setting the
environment variable PERLYAP_PURE_PYTHON=1 forces the reference lane (used by
the benchmark and the cross-lane tests).
"""
import os

from . import _ref

_FORCED_PURE = os.environ.get("PERLYAP_PURE_PYTHON", "").strip() not in ("", "0")

if _FORCED_PURE:
    impl = _ref
    COMPILED = False
else:
    try:
        from . import _speedups as impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        impl = _ref
        COMPILED = False


def lanes():
    """(name, module) pairs for every importable implementation lane."""
    out = [("python", _ref)]
    try:
        from . import _speedups

        out.append(("compiled", _speedups))
    except ImportError:
        pass
    return out
