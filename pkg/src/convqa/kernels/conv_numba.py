"""Numba-compiled conv1d kernels.

Same contract as ``conv_numpy``: callers allocate the outputs, the padded
input already includes the (K - 1) boundary columns, and gradients are
accumulated into the caller's buffers.

Each kernel runs one matrix product per kernel tap via ``np.dot``, which
numba lowers to BLAS without any Python dispatch.  BLAS accepts the
transposed and offset views directly (they stay contiguous in one axis),
so no temporary copies are made.  Scalar-loop variants were measured to be
slower at every shape tried, including tiny ones: the scalar loops only
vectorize along the output-channel axis, which is often narrow (the span
scorer has a single output channel), while BLAS wins regardless of shape.

``fastmath`` stays off so summation order is fixed and results are
reproducible run to run.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["conv1d_forward", "conv1d_grad_input", "conv1d_grad_weight"]


@njit(cache=True)
def conv1d_forward(xpad, weight, bias, out):
    """out[t, co] = bias[co] + sum_{j, ci} xpad[t + j, ci] * weight[j, ci, co]."""
    t_out, cout = out.shape
    k = weight.shape[0]
    for t in range(t_out):
        for co in range(cout):
            out[t, co] = bias[co]
    for j in range(k):
        contrib = np.dot(xpad[j:j + t_out], weight[j])
        for t in range(t_out):
            for co in range(cout):
                out[t, co] += contrib[t, co]


@njit(cache=True)
def conv1d_grad_input(gy, weight, gxpad):
    """gxpad[t + j, ci] += sum_co gy[t, co] * weight[j, ci, co]."""
    t_out = gy.shape[0]
    k, cin, _ = weight.shape
    for j in range(k):
        contrib = np.dot(gy, weight[j].T)
        for t in range(t_out):
            row_out = gxpad[t + j]
            row_in = contrib[t]
            for ci in range(cin):
                row_out[ci] += row_in[ci]


@njit(cache=True)
def conv1d_grad_weight(xpad, gy, gweight):
    """gweight[j, ci, co] += sum_t xpad[t + j, ci] * gy[t, co]."""
    t_out, cout = gy.shape
    k, cin, _ = gweight.shape
    for j in range(k):
        contrib = np.dot(xpad[j:j + t_out].T, gy)
        for ci in range(cin):
            for co in range(cout):
                gweight[j, ci, co] += contrib[ci, co]
