"""Backend selection for the belief-layer kernels.

The compiled core is preferred when it was built; otherwise the pure-numpy
reference takes over. ``ABELNET_BACKEND=python`` forces the fallback, which
is mainly useful for benchmarking the two against each other.
"""

import os
from contextlib import contextmanager

from . import pyref

_FORCED = os.environ.get("ABELNET_BACKEND", "").strip().lower()

if _FORCED in ("", "cython"):
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None
        if _FORCED == "cython":
            raise ImportError(
                "ABELNET_BACKEND=cython but the compiled kernel core is not built"
            )
else:
    _compiled = None

# `active` is the module whose kernels everything else calls through.
active = _compiled if _compiled is not None else pyref


def backend_name() -> str:
    return active.NAME


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str):
    if name == "python":
        return pyref
    if name == "cython":
        if _compiled is None:
            raise ValueError("compiled kernel core is not available")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


@contextmanager
def forced_backend(name: str):
    """Temporarily route all kernel calls through the named backend."""
    global active
    previous = active
    active = get_backend(name)
    try:
        yield
    finally:
        active = previous
