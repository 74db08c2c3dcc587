"""Backend selection for the hot kernels.

The compiled module is used when it imports; ``CURVLAB_KERNELS=python``
forces the numpy fallback.  Both expose ``cumquad4``, ``frame_values`` and
``frame_values_grad`` with identical signatures.
"""

from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    compiled_backend = None

if os.environ.get("CURVLAB_KERNELS", "").lower() == "python" or compiled_backend is None:
    backend = python_backend
else:
    backend = compiled_backend

BACKEND_NAME = "compiled" if backend is compiled_backend else "python"


def available_backends() -> dict:
    out = {"python": python_backend}
    if compiled_backend is not None:
        out["compiled"] = compiled_backend
    return out


def cumquad4(f, h):
    return backend.cumquad4(f, h)


def frame_values(t4, q):
    return backend.frame_values(t4, q)


def frame_values_grad(t4, q):
    return backend.frame_values_grad(t4, q)
