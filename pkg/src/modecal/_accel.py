"""Optional numba acceleration.

Set ``MODECAL_NO_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy kernels are used automatically.
"""
import os

_disabled = os.environ.get("MODECAL_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by MODECAL_NO_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def jit(*args, **kwargs):
    """``numba.njit`` with caching when numba is available, identity otherwise."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _njit(*args, **kwargs)


def pick(nb_impl, np_impl):
    """Select the numba implementation when enabled, else the numpy one."""
    return nb_impl if HAVE_NUMBA else np_impl
