"""Backend selection for the compiled kernels.

The numba path is used when numba imports and the environment variable
``TORUS_RENORM_NUMBA`` is not set to a false value (``0``, ``false``,
``no``, ``off``).  Otherwise every kernel falls back to vectorized numpy.
"""
import logging
import os
import warnings

LOGGER = logging.getLogger(__name__)

_FALSE = {"0", "false", "no", "off"}

# a too-old TBB on some hosts triggers a noisy warning at first parallel call
warnings.filterwarnings("ignore", message="The TBB threading layer")

try:
    import numba as _nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _nb = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("TORUS_RENORM_NUMBA", "1").strip().lower() not in _FALSE


def jit(parallel=False):
    """Return a nopython decorator, or the identity when numba is absent."""
    if not HAVE_NUMBA:
        return lambda func: func
    return _nb.njit(cache=True, parallel=parallel, fastmath=False)


prange = _nb.prange if HAVE_NUMBA else range


def set_threads(n):
    """Cap worker threads of the compiled kernels; ``None`` keeps the default."""
    if n is None or not HAVE_NUMBA:
        return
    n = max(1, min(int(n), _nb.config.NUMBA_NUM_THREADS))
    _nb.set_num_threads(n)
    LOGGER.debug("numba threads capped at %d", n)


def threads_from_env():
    value = os.environ.get("TORUS_RENORM_THREADS")
    return int(value) if value else None


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
