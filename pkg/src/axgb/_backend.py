"""Kernel backend selection.

Hot loops (split search, ensemble routing, ADWIN updates) are compiled with
numba when it is importable.  Setting ``AXGB_BACKEND=numpy`` in the
environment before import forces the pure-Python/numpy fallback path, which
produces identical results and is used to cross-check the compiled kernels.
"""
import importlib.util
import os
import sys
import warnings

_requested = os.environ.get("AXGB_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"AXGB_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the dev env
    numba = None
    HAVE_NUMBA = False
    if _requested == "numba":
        warnings.warn("numba is not importable; falling back to the numpy backend")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit(cache=True)`` if numba is available.

    The uncompiled function is kept as ``func.py_func`` either way so callers
    can reach the interpreted version explicitly.
    """
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=True)(func)


def compiled_copy(module, names):
    """Load a second instance of ``module`` with ``names`` compiled by numba.

    The kernels in the copy resolve each other through the copy's globals, so
    compiled code never calls back into interpreted code and the original
    module stays plain Python.  Returns None without numba.
    """
    if not HAVE_NUMBA:
        return None
    spec = importlib.util.spec_from_file_location(module.__name__ + "_jit", module.__file__)
    copy = importlib.util.module_from_spec(spec)
    # numba's on-disk cache re-imports the defining module by name
    sys.modules[spec.name] = copy
    spec.loader.exec_module(copy)
    for name in names:
        setattr(copy, name, numba.njit(cache=True)(getattr(copy, name)))
    return copy
