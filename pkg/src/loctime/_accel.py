"""Backend switch for the hot kernels.

Set ``LOCTIME_BACKEND=numpy`` to force the vectorized numpy fallbacks; the
default uses numba when it can be imported.
"""
import os

BACKEND_ENV = "LOCTIME_BACKEND"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = numba is not None and _requested == "numba"

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
    "error_model": "numpy",
}


def njit(fn):
    """Compile ``fn`` with numba if available, else return it unchanged.

    The loop twins are always importable so they can be compared against the
    numpy versions even when the numpy backend is selected.
    """
    if numba is None:
        return fn
    return numba.njit(**numba_default)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
