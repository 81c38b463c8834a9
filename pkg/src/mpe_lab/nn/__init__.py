"""Small tanh MLPs trained by momentum SGD, for regression and the Riesz loss.

The inner training loop runs in the compiled ``_kernels`` extension when it
was built, otherwise in ``_kernels_py``.  ``MPE_LAB_PURE_PYTHON=1`` forces the
fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("MPE_LAB_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def get_kernels(backend: str | None = None):
    """Kernel module for ``backend`` ('compiled', 'python' or None for the default)."""
    backend = backend or BACKEND
    if backend == "python":
        return _kernels_py
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


from .mlp import (  # noqa: E402
    Mlp,
    TrainConfig,
    TrainingError,
    fd_partial_action,
    forward,
    init_mlp,
    riesz_objective,
    train_regression,
    train_riesz,
)

__all__ = [
    "BACKEND",
    "Mlp",
    "TrainConfig",
    "TrainingError",
    "fd_partial_action",
    "forward",
    "get_kernels",
    "init_mlp",
    "riesz_objective",
    "train_regression",
    "train_riesz",
]
