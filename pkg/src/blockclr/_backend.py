"""Kernel backend selection.

The compiled extension is used when it imports; set ``BLOCKCLR_BACKEND=python``
to force the numpy fallback. Both backends expose
``stratum_nll(eta, layout)`` and ``stratum_nll_weights(eta, layout)``.
"""

import os
from types import SimpleNamespace

from . import _pykernels


def _python_backend():
    return SimpleNamespace(
        name="python",
        stratum_nll=_pykernels.stratum_nll,
        stratum_nll_weights=_pykernels.stratum_nll_weights,
    )


def _cython_backend():
    from . import _ckernels

    def stratum_nll(eta, layout):
        return _ckernels.stratum_nll(eta, layout.offsets)

    def stratum_nll_weights(eta, layout):
        return _ckernels.stratum_nll_weights(eta, layout.offsets)

    return SimpleNamespace(
        name="cython", stratum_nll=stratum_nll, stratum_nll_weights=stratum_nll_weights
    )


def load(name=None):
    """Return the named backend, or the best available one."""
    if name is None:
        name = os.environ.get("BLOCKCLR_BACKEND", "auto").lower()
    if name == "python":
        return _python_backend()
    if name == "cython":
        return _cython_backend()
    if name != "auto":
        raise ValueError(f"unknown backend {name!r}; use auto, cython or python")
    try:
        return _cython_backend()
    except ImportError:
        return _python_backend()


available = ["python"]
try:
    from . import _ckernels  # noqa: F401
except ImportError:
    pass
else:
    available.insert(0, "cython")

kernels = load()
