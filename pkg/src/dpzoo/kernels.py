"""Backend selection for the hot kernels.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback in :mod:`dpzoo._pykernels` takes over. Both are bit-identical, so the
choice only affects speed. :func:`use_backend` switches at runtime (tests and
the benchmark use it to compare the two).
"""

import logging

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("uniforms", "ndtri", "fill_normals", "seq_sum", "seq_dot", "seq_rowsum",
          "seq_accumulate", "axpy")

BACKEND = None


def available_backends():
    return ("cython", "python") if _ckernels is not None else ("python",)


def use_backend(name):
    """Route every kernel through ``name`` ("cython" or "python")."""
    global BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        module = _ckernels
    elif name == "python":
        module = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(module, fn)
    BACKEND = name
    logger.debug("kernel backend: %s", name)


def current_backend():
    return BACKEND


use_backend("cython" if _ckernels is not None else "python")
