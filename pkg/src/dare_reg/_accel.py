"""Optional numba acceleration.

Set ``DARE_NUMBA=0`` to force the pure-numpy kernels (numba is then never
imported). ``DARE_THREADS`` caps the numba thread pool; 0 means auto.
"""

import logging
import os

logger = logging.getLogger(__name__)

_flag = os.environ.get("DARE_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba

        if "NUMBA_THREADING_LAYER" not in os.environ:
            numba.config.THREADING_LAYER = "workqueue"
        njit = numba.njit
        prange = numba.prange
    except ImportError:  # pragma: no cover - numba is a declared dependency
        logger.warning("numba not importable, falling back to numpy kernels")
        USE_NUMBA = False

if USE_NUMBA:
    _threads = int(os.environ.get("DARE_THREADS", "0") or 0)
    if _threads > 0:
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))
else:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    prange = range


def backend():
    return "numba" if USE_NUMBA else "numpy"
