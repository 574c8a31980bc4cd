"""Layer objects: parameter containers plus a forward built from autodiff ops.

Everything operates on a single sequence at a time, shaped (time, channels).
Weights use Glorot-uniform init, biases start at zero, and every layer
exposes params() as (name, tensor) pairs for optimizers and checkpoints.
"""

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

BYPASS_VARIANTS = ("none", "residual", "dense")


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear:
    def __init__(self, in_dim, out_dim, rng, dtype=np.float32):
        self.w = Tensor(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim,
                                       dtype), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self, prefix=""):
        return [(prefix + "w", self.w), (prefix + "b", self.b)]


class Conv1D:
    """1-d convolution over time, weight (k, in, out), stride 1."""

    def __init__(self, kernel_width, in_dim, out_dim, rng, dtype=np.float32):
        if kernel_width < 1:
            raise ConfigError("kernel_width must be >= 1, got %d" % kernel_width)
        fan_in = kernel_width * in_dim
        fan_out = kernel_width * out_dim
        self.kernel_width = kernel_width
        self.weight = Tensor(glorot_uniform(rng, (kernel_width, in_dim, out_dim),
                                            fan_in, fan_out, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def __call__(self, x, pad_left=None, pad_right=None):
        return ad.conv1d(x, self.weight, self.bias,
                         pad_left=pad_left, pad_right=pad_right)

    def params(self, prefix=""):
        return [(prefix + "weight", self.weight), (prefix + "bias", self.bias)]


class LayerNorm:
    def __init__(self, dim, dtype=np.float32):
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ad.layer_norm(x, self.gain, self.bias)

    def params(self, prefix=""):
        return [(prefix + "gain", self.gain), (prefix + "bias", self.bias)]


class SelfAttention:
    """Multi-head scaled dot-product self-attention, no output projection.

    Each head has its own query/key/value projections into head_dim; head
    outputs are concatenated, so the result width is heads * head_dim.
    """

    def __init__(self, input_dim, heads, head_dim, rng, dtype=np.float32):
        if heads < 1 or head_dim < 1:
            raise ConfigError("need heads >= 1 and head_dim >= 1")
        self.input_dim = input_dim
        self.heads = heads
        self.head_dim = head_dim
        self.scale = 1.0 / math.sqrt(head_dim)
        self.wq = []
        self.wk = []
        self.wv = []
        for _ in range(heads):
            for store in (self.wq, self.wk, self.wv):
                store.append(Tensor(glorot_uniform(rng, (input_dim, head_dim),
                                                   input_dim, head_dim, dtype),
                                    requires_grad=True))

    @property
    def width(self):
        return self.heads * self.head_dim

    def __call__(self, x, mask):
        if x.shape[1] != self.input_dim:
            raise DimensionError("self-attention expects width %d, got %d"
                                 % (self.input_dim, x.shape[1]))
        n = x.shape[0]
        key_mask = np.broadcast_to(np.asarray(mask, dtype=bool), (n, n))
        outputs = []
        for h in range(self.heads):
            q = ad.matmul(x, self.wq[h])
            k = ad.matmul(x, self.wk[h])
            v = ad.matmul(x, self.wv[h])
            scores = ad.elementwise_mul(ad.matmul(q, ad.transpose(k)), self.scale)
            weights = ad.softmax(scores, mask=key_mask)
            outputs.append(ad.matmul(weights, v))
        return ad.concat(outputs, axis=-1) if self.heads > 1 else outputs[0]

    def params(self, prefix=""):
        out = []
        for h in range(self.heads):
            out.append(("%shead%d/wq" % (prefix, h), self.wq[h]))
            out.append(("%shead%d/wk" % (prefix, h), self.wk[h]))
            out.append(("%shead%d/wv" % (prefix, h), self.wv[h]))
        return out


def bypass_width(variant, attn_width, in_width):
    if variant == "none":
        return attn_width
    if variant == "residual":
        if attn_width != in_width:
            raise ConfigError(
                "residual bypass needs matching widths (attention %d vs input %d);"
                " use heads * head_dim == hidden" % (attn_width, in_width))
        return in_width
    if variant == "dense":
        return attn_width + in_width
    raise ConfigError("unknown bypass variant %r (want one of %s)"
                      % (variant, ", ".join(BYPASS_VARIANTS)))


def apply_bypass(variant, attn_out, block_in):
    """Combine attention output with its input: replace, add, or concatenate."""
    if variant == "none":
        return attn_out
    if variant == "residual":
        if attn_out.shape != block_in.shape:
            raise ConfigError("residual bypass shape mismatch: %s vs %s"
                              % (attn_out.shape, block_in.shape))
        return ad.add(attn_out, block_in)
    if variant == "dense":
        return ad.concat([attn_out, block_in], axis=-1)
    raise ConfigError("unknown bypass variant %r (want one of %s)"
                      % (variant, ", ".join(BYPASS_VARIANTS)))


class ConvEncoderBlock:
    """Stack of masked convolutions with optional norm/attention/dropout.

    Structure per conv layer: [layer norm] -> [dropout] -> conv -> relu ->
    re-mask.  When input_dim differs from hidden, a linear projection runs
    first.  An optional self-attention module is inserted after
    ``attention_after`` conv layers (default: after the last), wrapped in
    [layer norm] -> attention -> bypass -> re-mask.  ``dropout_position``
    selects whether dropout precedes each conv ("conv") or runs once after
    the input projection ("proj").
    """

    def __init__(self, input_dim, hidden, rng, num_layers=4, kernel_width=5,
                 use_layer_norm=False, attention=None, bypass="dense",
                 attention_after=None, dropout=0.0, dropout_position="conv",
                 dtype=np.float32):
        if num_layers < 1:
            raise ConfigError("num_layers must be >= 1, got %d" % num_layers)
        if kernel_width % 2 == 0:
            raise ConfigError("encoder kernel_width must be odd, got %d"
                              % kernel_width)
        if dropout_position not in ("conv", "proj"):
            raise ConfigError("dropout_position must be 'conv' or 'proj', got %r"
                              % dropout_position)
        if attention_after is None:
            attention_after = num_layers
        if not 0 <= attention_after <= num_layers:
            raise ConfigError("attention_after must be in [0, %d], got %d"
                              % (num_layers, attention_after))
        self.hidden = hidden
        self.num_layers = num_layers
        self.use_layer_norm = use_layer_norm
        self.attention = attention
        self.bypass = bypass
        self.attention_after = attention_after
        self.dropout = float(dropout)
        self.dropout_position = dropout_position
        self.dtype = np.dtype(dtype)

        self.proj = Linear(input_dim, hidden, rng, dtype) if input_dim != hidden else None
        self.attn_norm = None
        self.norms = []
        self.convs = []
        width = hidden
        for i in range(num_layers):
            if attention is not None and i == attention_after:
                width = self._install_attention(width, dtype)
            self.norms.append(LayerNorm(width, dtype) if use_layer_norm else None)
            self.convs.append(Conv1D(kernel_width, width, hidden, rng, dtype))
            width = hidden
        if attention is not None and attention_after == num_layers:
            width = self._install_attention(width, dtype)
        self.output_dim = width

    def _install_attention(self, width, dtype):
        if self.attention.input_dim != width:
            raise ConfigError("attention expects width %d but block carries %d"
                              % (self.attention.input_dim, width))
        if self.use_layer_norm:
            self.attn_norm = LayerNorm(width, dtype)
        return bypass_width(self.bypass, self.attention.width, width)

    def _attend(self, x, mask, mask_col):
        pre = self.attn_norm(x) if self.attn_norm is not None else x
        attended = self.attention(pre, mask)
        return ad.elementwise_mul(apply_bypass(self.bypass, attended, x), mask_col)

    def forward(self, x, mask, training=False, rng=None):
        """Encode one sequence; x is (t, input_dim), mask a (t,) bool array."""
        mask = np.asarray(mask, dtype=bool)
        mask_col = mask[:, None].astype(self.dtype)
        h = x
        if self.proj is not None:
            h = self.proj(h)
            if self.dropout_position == "proj":
                h = ad.dropout(h, self.dropout, training=training, rng=rng)
        for i in range(self.num_layers):
            if self.attention is not None and i == self.attention_after:
                h = self._attend(h, mask, mask_col)
            if self.norms[i] is not None:
                h = self.norms[i](h)
            if self.dropout_position == "conv":
                h = ad.dropout(h, self.dropout, training=training, rng=rng)
            h = ad.elementwise_mul(ad.relu(self.convs[i](h)), mask_col)
        if self.attention is not None and self.attention_after == self.num_layers:
            h = self._attend(h, mask, mask_col)
        return h

    __call__ = forward

    def params(self, prefix=""):
        out = []
        if self.proj is not None:
            out.extend(self.proj.params(prefix + "proj/"))
        for i in range(self.num_layers):
            if self.norms[i] is not None:
                out.extend(self.norms[i].params("%snorm%d/" % (prefix, i)))
            out.extend(self.convs[i].params("%sconv%d/" % (prefix, i)))
        if self.attention is not None:
            out.extend(self.attention.params(prefix + "attn/"))
            if self.attn_norm is not None:
                out.extend(self.attn_norm.params(prefix + "attn_norm/"))
        return out
