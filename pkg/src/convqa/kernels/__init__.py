"""Backend selection for the hot conv1d kernels.

The CONVQA_BACKEND environment variable picks the implementation:

    CONVQA_BACKEND=numba   use the @njit kernels (error if numba is missing)
    CONVQA_BACKEND=numpy   use the pure-numpy im2col kernels
    unset                  prefer numba, silently fall back to numpy

Both backends expose the same three functions; see benchmarks/bench_kernels.py
for a speed comparison.
"""

import os

from ..errors import ConfigError
from . import conv_numpy

_requested = os.environ.get("CONVQA_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ConfigError(
        f"CONVQA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    _impl = conv_numpy
    _backend = "numpy"
else:
    try:
        from . import conv_numba as _impl
        _backend = "numba"
    except ImportError:
        if _requested == "numba":
            raise ConfigError("CONVQA_BACKEND=numba but numba is not installed")
        _impl = conv_numpy
        _backend = "numpy"

conv1d_forward = _impl.conv1d_forward
conv1d_grad_input = _impl.conv1d_grad_input
conv1d_grad_weight = _impl.conv1d_grad_weight


def backend_name():
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _backend
