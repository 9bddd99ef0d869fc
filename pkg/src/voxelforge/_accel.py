"""Kernel backend selection.

Hot loops (distance transform scanlines, edge thinning, hysteresis) ship in
two flavours: a numba ``@njit`` kernel and a pure-numpy fallback. The
backend is picked per call from the environment so tests can exercise both:

    VOXELFORGE_NUMBA=0     force the numpy fallback
    VOXELFORGE_THREADS=N   cap numba threads and preprocessing workers
"""

import os

try:
    import numba
    from numba import njit, prange

    # the system TBB is too old for numba; avoid the import-time warning
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


_FALSE = {"0", "false", "no", "off"}


def use_numba():
    """True when the numba kernels should run."""
    if not HAVE_NUMBA:
        return False
    return os.environ.get("VOXELFORGE_NUMBA", "1").strip().lower() not in _FALSE


def backend_name():
    return "numba" if use_numba() else "numpy"


def thread_cap():
    """Worker cap from VOXELFORGE_THREADS, or None when unset."""
    raw = os.environ.get("VOXELFORGE_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError(f"VOXELFORGE_THREADS must be >= 1, got {raw!r}")
    return n


def apply_thread_cap():
    n = thread_cap()
    if n is not None and HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n
