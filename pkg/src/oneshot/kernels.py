"""Backend selection for the hot per-cell kernels.

The compiled extension ``oneshot._ckernels`` is used when it was built;
otherwise the numpy implementation in ``oneshot._pykernels`` is used.
Setting ``ONESHOT_PURE_PYTHON=1`` forces the numpy backend.
"""

import importlib
import os

from . import _pykernels

__all__ = ["BACKEND", "load_backend", "objective", "objective_gradient", "information_matrices"]


def load_backend(name):
    """Return the kernel module called ``name`` (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module("oneshot._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("ONESHOT_PURE_PYTHON", "").strip() not in ("", "0"):
        return "python", _pykernels
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", _pykernels


BACKEND, _impl = _select()

objective = _impl.objective
objective_gradient = _impl.objective_gradient
information_matrices = _impl.information_matrices
