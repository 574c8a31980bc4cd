"""Pure-numpy conv1d kernels (one GEMM per kernel tap).

Fallback backend for machines without numba; also the reference the numba
kernels are checked against.  Each function is K matrix products over
shifted views of the input, which avoids materializing an im2col matrix.
All functions fill a caller-allocated output array so both backends share
one calling convention.
"""

import numpy as np


def conv1d_forward(xpad, weight, bias, out):
    """out[t, co] = bias[co] + sum_{k, ci} xpad[t + k, ci] * weight[k, ci, co]."""
    k = weight.shape[0]
    t = out.shape[0]
    out[:] = bias
    for j in range(k):
        out += xpad[j:j + t] @ weight[j]


def conv1d_grad_input(gy, weight, gxpad):
    """Accumulate d(loss)/d(xpad) into gxpad given upstream gy of shape (T, Co)."""
    k = weight.shape[0]
    t = gy.shape[0]
    for j in range(k):
        gxpad[j:j + t] += gy @ weight[j].T


def conv1d_grad_weight(xpad, gy, gweight):
    """Accumulate d(loss)/d(weight) into gweight."""
    k = gweight.shape[0]
    t = gy.shape[0]
    for j in range(k):
        gweight[j] += xpad[j:j + t].T @ gy
