"""Dense tensors with reverse-mode automatic differentiation.

The engine is a recording tape: while a Graph is active (``with Graph():``),
every primitive that touches a tensor with ``requires_grad`` appends one entry
(output, inputs, backward closure) to it.  ``backward(loss)`` walks the tape
once in reverse and accumulates gradients into ``.grad`` buffers.  Outside a
Graph the same primitives run in plain inference mode and record nothing.

Gradients accumulate: calling backward twice without clearing ``.grad``
doubles it.  Use ``zero_grads`` between steps.

float64 is used by the finite-difference test suite; training normally runs
in float32.
"""

import threading

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, MaskError

MASK_FILL = -1e30        # added to masked logits before softmax
PROB_EPS = 1e-12         # cross-entropy probability clamp
LAYER_NORM_EPS = 1e-5


class Tensor:
    """A dense n-d array, optionally participating in gradient recording."""

    __slots__ = ("data", "grad", "requires_grad", "graph")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.graph = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return elementwise_mul(self, other)

    def __rmul__(self, other):
        return elementwise_mul(self, other)

    def __sub__(self, other):
        return add(self, elementwise_mul(other, -1.0))


_state = threading.local()


def _graph_stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


class Graph:
    """Ordered record of executed operations for one forward pass.

    Entries are appended in execution order, which is automatically a
    topological order of the data flow; backward replays them exactly once
    in reverse.  A graph and the tensors recorded on it belong to a single
    thread.
    """

    def __init__(self):
        self.entries = []

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _graph_stack().pop()
        assert popped is self
        return False

    def record(self, out, inputs, backward_fn):
        out.requires_grad = True
        out.graph = self
        self.entries.append((out, inputs, backward_fn))


def active_graph():
    stack = _graph_stack()
    return stack[-1] if stack else None


def as_tensor(value, like=None):
    """Wrap raw data in a Tensor (constants, test inputs)."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _maybe_record(data, inputs, backward_fn):
    """Build the output tensor, recording it if gradients are being taped."""
    out = Tensor(data)
    graph = active_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(out, inputs, backward_fn)
    return out


def backward(loss):
    """Accumulate d(loss)/d(t) into t.grad for every reachable tensor.

    loss must be a scalar recorded on some graph.  Repeated calls keep
    accumulating (documented contract).
    """
    if loss.data.size != 1:
        raise DimensionError(
            f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss.graph is None:
        raise ConfigError("backward: loss was not recorded on any graph "
                          "(run the forward pass inside 'with Graph():')")
    pending = {id(loss): np.ones_like(loss.data)}
    holders = {id(loss): loss}

    def push(tensor, grad):
        key = id(tensor)
        if key in pending:
            pending[key] = pending[key] + grad
        else:
            pending[key] = np.array(grad, copy=True)
            holders[key] = tensor

    for out, inputs, backward_fn in reversed(loss.graph.entries):
        grad_out = pending.pop(id(out), None)
        if grad_out is None:
            continue
        holders.pop(id(out))
        _accumulate(out, grad_out)
        for tensor, grad in zip(inputs, backward_fn(grad_out)):
            if grad is not None and tensor.requires_grad:
                push(tensor, grad)
    for key, grad in pending.items():
        _accumulate(holders[key], grad)


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def _unbroadcast(grad, shape):
    """Sum grad over the axes that were broadcast to reach its shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    data = a.data + b.data

    def bw(g):
        return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                _unbroadcast(g, b.data.shape) if b.requires_grad else None)

    return _maybe_record(data, (a, b), bw)


def elementwise_mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    data = a.data * b.data

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None)

    return _maybe_record(data, (a, b), bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree, {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def bw(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _maybe_record(data, (a, b), bw)


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-d tensor, got {a.data.shape}")
    return _maybe_record(np.ascontiguousarray(a.data.T), (a,),
                         lambda g: (np.ascontiguousarray(g.T),))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape
    return _maybe_record(a.data.reshape(shape), (a,),
                         lambda g: (g.reshape(old),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _maybe_record(data, tuple(tensors), bw)


def narrow(a, axis, start, length):
    """Contiguous slice of `length` entries along `axis`."""
    a = as_tensor(a)
    if start < 0 or start + length > a.data.shape[axis]:
        raise DimensionError(
            f"narrow: [{start}:{start + length}] out of range for axis {axis} "
            f"of shape {a.data.shape}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = np.ascontiguousarray(a.data[index])

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _maybe_record(data, (a,), bw)


def sum_all(a):
    a = as_tensor(a)
    shape = a.data.shape

    def bw(g):
        return (np.full(shape, g.item(), dtype=a.data.dtype),)

    return _maybe_record(np.asarray(a.data.sum()), (a,), bw)


def mean_all(a):
    a = as_tensor(a)
    shape = a.data.shape
    n = a.data.size

    def bw(g):
        return (np.full(shape, g.item() / n, dtype=a.data.dtype),)

    return _maybe_record(np.asarray(a.data.mean()), (a,), bw)


def relu(a):
    a = as_tensor(a)
    data = np.maximum(a.data, 0)

    def bw(g):
        return (g * (a.data > 0),)

    return _maybe_record(data, (a,), bw)


def softmax(a, mask=None):
    """Softmax over the last axis.

    mask (boolean, broadcastable to a's shape) marks valid positions; masked
    logits get MASK_FILL added and their probabilities are exactly zero.
    Every row must keep at least one valid position.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise MaskError("softmax: a row has no unmasked position")
        x = x + np.where(mask, 0.0, MASK_FILL).astype(x.dtype)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = e * mask
    probs = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * probs).sum(axis=-1, keepdims=True)
        return (probs * (g - inner),)

    return _maybe_record(probs, (a,), bw)


def layer_norm(a, gain, bias, eps=LAYER_NORM_EPS):
    """Normalize over the last axis, then scale and shift."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    data = normed * gain.data + bias.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        g_gain = (g * normed).sum(axis=lead) if gain.requires_grad else None
        g_bias = g.sum(axis=lead) if bias.requires_grad else None
        if a.requires_grad:
            gn = g * gain.data
            g_a = inv * (gn - gn.mean(axis=-1, keepdims=True)
                         - normed * (gn * normed).mean(axis=-1, keepdims=True))
        else:
            g_a = None
        return (g_a, g_gain, g_bias)

    return _maybe_record(data, (a, gain, bias), bw)


def dropout(a, p, training, rng=None):
    """Inverted dropout: identity at inference, kept units scaled by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    keep = (rng.random(a.data.shape) >= p)
    scale = np.asarray(1.0 / (1.0 - p), dtype=a.data.dtype)
    factor = keep * scale

    def bw(g):
        return (g * factor,)

    return _maybe_record(a.data * factor, (a,), bw)


def conv1d(x, weight, bias, pad_left=None, pad_right=None):
    """1-d cross-correlation over the time axis with same-length output.

    x: (T, Cin), weight: (K, Cin, Cout), bias: (Cout,).  With no explicit
    padding K must be odd and (K-1)/2 zeros go on both sides.  Callers that
    need an even K (the wide output layer) pass pad_left/pad_right
    explicitly; they must sum to K-1 so the output keeps length T.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 3 or bias.data.ndim != 1:
        raise DimensionError(
            f"conv1d expects x (T,Cin), weight (K,Cin,Cout), bias (Cout,); got "
            f"{x.data.shape}, {weight.data.shape}, {bias.data.shape}")
    k, cin, cout = weight.data.shape
    t = x.data.shape[0]
    if x.data.shape[1] != cin:
        raise DimensionError(
            f"conv1d: x has {x.data.shape[1]} channels but weight expects {cin}")
    if bias.data.shape[0] != cout:
        raise DimensionError(
            f"conv1d: bias length {bias.data.shape[0]} != output channels {cout}")
    if pad_left is None and pad_right is None:
        if k % 2 == 0:
            raise ConfigError(
                f"conv1d: even kernel width {k} needs explicit pad_left/pad_right")
        pad_left = pad_right = (k - 1) // 2
    elif pad_left is None or pad_right is None:
        raise ConfigError("conv1d: give both pad_left and pad_right or neither")
    if pad_left + pad_right != k - 1:
        raise ConfigError(
            f"conv1d: pad_left + pad_right must equal K-1 ({k - 1}), "
            f"got {pad_left} + {pad_right}")

    xpad = np.zeros((t + k - 1, cin), dtype=x.data.dtype)
    xpad[pad_left:pad_left + t] = x.data
    w = np.ascontiguousarray(weight.data)
    out = np.empty((t, cout), dtype=x.data.dtype)
    kernels.conv1d_forward(xpad, w, np.ascontiguousarray(bias.data), out)

    def bw(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            gxpad = np.zeros_like(xpad)
            kernels.conv1d_grad_input(g, w, gxpad)
            gx = gxpad[pad_left:pad_left + t]
        else:
            gx = None
        if weight.requires_grad:
            gw = np.zeros_like(w)
            kernels.conv1d_grad_weight(xpad, g, gw)
        else:
            gw = None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return (gx, gw, gb)

    return _maybe_record(out, (x, weight, bias), bw)


def cross_entropy(probs, gold):
    """Per-row negative log probability of the gold index.

    probs: (B, N) probability rows, gold: (B,) integer indices.  Probabilities
    are clamped at PROB_EPS before the log so early-training zeros stay finite.
    Returns a (B,) tensor.
    """
    probs = as_tensor(probs)
    gold = np.asarray(gold, dtype=np.int64)
    if probs.data.ndim != 2 or gold.ndim != 1 or gold.shape[0] != probs.data.shape[0]:
        raise DimensionError(
            f"cross_entropy expects probs (B,N) and gold (B,), got "
            f"{probs.data.shape} and {gold.shape}")
    rows = np.arange(gold.shape[0])
    picked = np.maximum(probs.data[rows, gold], PROB_EPS)
    data = -np.log(picked)

    def bw(g):
        grad = np.zeros_like(probs.data)
        grad[rows, gold] = -g / picked
        return (grad,)

    return _maybe_record(data, (probs,), bw)


def embedding_lookup(table, ids, pad_unk=None):
    """Gather embedding rows for integer ids.

    table is a frozen (V, D) array; pad_unk, when given, is a trainable (2, D)
    tensor whose rows replace table rows 0 (PAD) and 1 (UNK) and are the only
    rows receiving gradient.
    """
    table = np.asarray(table)
    ids = np.asarray(ids, dtype=np.int64)
    data = table[ids].copy()
    if pad_unk is None:
        return Tensor(data)
    pad_unk = as_tensor(pad_unk)
    sel_pad = ids == 0
    sel_unk = ids == 1
    data[sel_pad] = pad_unk.data[0]
    data[sel_unk] = pad_unk.data[1]

    def bw(g):
        grad = np.zeros_like(pad_unk.data)
        if sel_pad.any():
            grad[0] = g[sel_pad].sum(axis=0)
        if sel_unk.any():
            grad[1] = g[sel_unk].sum(axis=0)
        return (grad,)

    return _maybe_record(data, (pad_unk,), bw)
