"""Backend selection for the derivative kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Setting ``FFCA_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py
from ._kernels_py import ORDER_DIAGONAL, ORDER_FULL, ORDER_GRADIENT, RELU, SOFTPLUS  # noqa: F401

try:
    if os.environ.get("FFCA_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("compiled kernels disabled by FFCA_PURE_PYTHON")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py.derivatives}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.derivatives

BACKEND = "compiled" if _compiled is not None else "python"


def derivatives(weights, biases, act, beta, X, out_index, order, backend=None):
    """Dispatch to the selected backend (see ``_kernels_py.derivatives``)."""
    try:
        fn = BACKENDS[backend or BACKEND]
    except KeyError:
        raise ValueError(f"unknown kernel backend {backend!r}; available: {sorted(BACKENDS)}") from None
    return fn(weights, biases, act, beta, X, out_index, order)
