"""Model assembly: configuration files, presets, and the end-to-end QA model.

A model is embeddings -> conv input encoder(s) -> context-question attention
-> optional model encoder -> optional extra deep blocks -> span output head.
Configurations are flat ``key = value`` text files; the bundled presets are a
family of ready-made configurations, each carrying reference metrics
(dev F1, parameter count, training examples/sec) recorded for that
configuration in the experiment sweep it came from.  Reference numbers are
informational only -- nothing asserts them.
"""

import dataclasses
import importlib.resources

import numpy as np

from . import autodiff as ad
from .attention import basic_attend, bidirectional_attend
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import MAX_CONTEXT_LEN, MAX_QUESTION_LEN, Vocab
from .errors import ConfigError, DataError, ParseError
from .layers import BYPASS_VARIANTS, ConvEncoderBlock, SelfAttention, glorot_uniform
from .span import DEFAULT_MAX_SPAN_LEN, OutputHead, SpanPrediction, \
    decode_constrained, decode_naive

ATTENTION_KINDS = ("basic", "bidirectional")
OUTPUT_KINDS = ("pointwise", "wide")
DECODE_KINDS = ("naive", "constrained")
POSITION_KINDS = ("after", "between")
DROPOUT_POSITIONS = ("conv", "proj")


@dataclasses.dataclass
class ModelConfig:
    name: str = "custom"
    embedding_dim: int = 100
    trainable_pad_unk: bool = False
    hidden: int = 128
    num_layers: int = 4
    kernel_width: int = 5
    share_input_encoders: bool = False
    model_encoder: bool = True
    attention: str = "basic"
    self_attention: bool = False
    self_attention_heads: int = 4
    self_attention_dim: int = 32
    self_attention_bypass: str = "dense"
    self_attention_position: str = "after"
    layer_norm: bool = False
    output: str = "wide"
    output_kernel_width: int = 20
    decode: str = "constrained"
    max_span_len: int = DEFAULT_MAX_SPAN_LEN
    dropout: float = 0.0
    dropout_position: str = "conv"
    l2: float = 0.0
    deep: bool = False
    reference_f1: float = None
    reference_params: int = None
    reference_eps: float = None


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ValueError("expected true or false, got %r" % text)


_FIELD_PARSERS = {
    field.name: {bool: _parse_bool, int: int, float: float, str: str}[field.type]
    for field in dataclasses.fields(ModelConfig)
}


def validate_config(config):
    if config.embedding_dim < 1:
        raise ConfigError("embedding_dim must be >= 1")
    if config.hidden < 1:
        raise ConfigError("hidden must be >= 1")
    if config.num_layers < 1:
        raise ConfigError("num_layers must be >= 1")
    if config.kernel_width < 1 or config.kernel_width % 2 == 0:
        raise ConfigError("kernel_width must be odd and >= 1, got %d"
                          % config.kernel_width)
    if config.attention not in ATTENTION_KINDS:
        raise ConfigError("attention must be one of %s, got %r"
                          % (", ".join(ATTENTION_KINDS), config.attention))
    if config.output not in OUTPUT_KINDS:
        raise ConfigError("output must be one of %s, got %r"
                          % (", ".join(OUTPUT_KINDS), config.output))
    if config.output_kernel_width < 1:
        raise ConfigError("output_kernel_width must be >= 1")
    if config.decode not in DECODE_KINDS:
        raise ConfigError("decode must be one of %s, got %r"
                          % (", ".join(DECODE_KINDS), config.decode))
    if config.max_span_len < 1:
        raise ConfigError("max_span_len must be >= 1")
    if config.self_attention_bypass not in BYPASS_VARIANTS:
        raise ConfigError("self_attention_bypass must be one of %s, got %r"
                          % (", ".join(BYPASS_VARIANTS),
                             config.self_attention_bypass))
    if config.self_attention_position not in POSITION_KINDS:
        raise ConfigError("self_attention_position must be one of %s, got %r"
                          % (", ".join(POSITION_KINDS),
                             config.self_attention_position))
    if config.dropout_position not in DROPOUT_POSITIONS:
        raise ConfigError("dropout_position must be one of %s, got %r"
                          % (", ".join(DROPOUT_POSITIONS),
                             config.dropout_position))
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError("dropout must be in [0, 1), got %r" % config.dropout)
    if config.l2 < 0.0:
        raise ConfigError("l2 must be >= 0, got %r" % config.l2)
    if config.self_attention:
        if config.self_attention_heads < 1 or config.self_attention_dim < 1:
            raise ConfigError("self-attention heads and dim must be >= 1")
        width = config.self_attention_heads * config.self_attention_dim
        if config.self_attention_bypass == "residual" and width != config.hidden:
            raise ConfigError(
                "residual bypass needs heads * head_dim == hidden"
                " (%d * %d != %d)" % (config.self_attention_heads,
                                      config.self_attention_dim, config.hidden))
    return config


def parse_config(text, source="<config>"):
    """Parse flat ``key = value`` lines; # starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("%s: expected 'key = value'" % source, line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_PARSERS:
            raise ParseError("%s: unknown option %r" % (source, key), line=lineno)
        if key in values:
            raise ParseError("%s: duplicate option %r" % (source, key),
                             line=lineno)
        try:
            values[key] = _FIELD_PARSERS[key](value)
        except ValueError as exc:
            raise ParseError("%s: bad value for %r (%s)" % (source, key, exc),
                             line=lineno) from exc
    return validate_config(ModelConfig(**values))


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def _preset_dir():
    return importlib.resources.files(__package__) / "presets"


def available_presets():
    names = []
    for entry in _preset_dir().iterdir():
        if entry.name.endswith(".cfg"):
            names.append(entry.name[:-4])
    return sorted(names)


def load_preset(name):
    resource = _preset_dir() / (name + ".cfg")
    if not resource.is_file():
        raise ConfigError("unknown preset %r (available: %s)"
                          % (name, ", ".join(available_presets())))
    return parse_config(resource.read_text(encoding="utf-8"),
                        source="preset %s" % name)


def apply_overrides(config, overrides):
    """Apply CLI-style key=value string overrides to a config."""
    values = dataclasses.asdict(config)
    for key, value in overrides.items():
        if key not in _FIELD_PARSERS:
            raise ConfigError("unknown option %r in override" % key)
        try:
            values[key] = _FIELD_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError("bad value for %r: %s" % (key, exc)) from exc
    return validate_config(ModelConfig(**values))


def config_to_dict(config):
    return dataclasses.asdict(config)


def config_from_dict(values):
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    return validate_config(ModelConfig(**values))


_FROM_CONFIG = object()


class Model:
    """End-to-end extractive QA model over token id sequences."""

    def __init__(self, config, vocab, seed=0, dtype=np.float32):
        validate_config(config)
        if vocab.dim != config.embedding_dim:
            raise ConfigError("embedding_dim %d does not match vocab dim %d"
                              % (config.embedding_dim, vocab.dim))
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        self.embedding = vocab.matrix.astype(self.dtype)  # frozen
        rng = np.random.default_rng(seed)
        if config.trainable_pad_unk:
            self.pad_unk = Tensor(self.embedding[:2].copy(), requires_grad=True)
        else:
            self.pad_unk = None

        if config.self_attention_position == "after":
            attention_after = config.num_layers
        else:
            attention_after = min(2, config.num_layers)

        def make_encoder(input_dim):
            attn = None
            if config.self_attention:
                attn = SelfAttention(config.hidden, config.self_attention_heads,
                                     config.self_attention_dim, rng, self.dtype)
            return ConvEncoderBlock(
                input_dim, config.hidden, rng,
                num_layers=config.num_layers,
                kernel_width=config.kernel_width,
                use_layer_norm=config.layer_norm,
                attention=attn,
                bypass=config.self_attention_bypass,
                attention_after=attention_after,
                dropout=config.dropout,
                dropout_position=config.dropout_position,
                dtype=self.dtype)

        self.context_encoder = make_encoder(config.embedding_dim)
        if config.share_input_encoders:
            self.question_encoder = self.context_encoder
        else:
            self.question_encoder = make_encoder(config.embedding_dim)
        enc_width = self.context_encoder.output_dim
        if config.attention == "bidirectional":
            self.similarity_weight = Tensor(
                glorot_uniform(rng, (3 * enc_width,), 3 * enc_width, 1,
                               self.dtype), requires_grad=True)
            width = 4 * enc_width
        else:
            self.similarity_weight = None
            width = 2 * enc_width
        self.model_encoder = None
        if config.model_encoder:
            self.model_encoder = make_encoder(width)
            width = self.model_encoder.output_dim
        self.deep_blocks = []
        if config.deep:
            for _ in range(2):
                block = make_encoder(width)
                self.deep_blocks.append(block)
                width = block.output_dim
        head_kernel = config.output_kernel_width if config.output == "wide" else 1
        self.head = OutputHead(width, rng, kernel_width=head_kernel,
                               proj_dim=20, dtype=self.dtype)

    def forward_example(self, context_ids, context_mask, question_ids,
                        question_mask, training=False, rng=None, capture=None):
        """Span distributions for one (context, question) pair.

        Inputs are id/bool arrays of matching length per side; returns
        (p_start, p_end) over context positions.  With ``capture`` given, the
        context-question attention weights land in capture["weights"].
        """
        c_emb = ad.embedding_lookup(self.embedding, context_ids, self.pad_unk)
        q_emb = ad.embedding_lookup(self.embedding, question_ids, self.pad_unk)
        context = self.context_encoder.forward(c_emb, context_mask,
                                               training=training, rng=rng)
        question = self.question_encoder.forward(q_emb, question_mask,
                                                 training=training, rng=rng)
        if self.config.attention == "bidirectional":
            blend, weights = bidirectional_attend(context, question,
                                                  context_mask, question_mask,
                                                  self.similarity_weight)
        else:
            blend, weights = basic_attend(context, question, question_mask)
        mask_col = np.asarray(context_mask, dtype=bool)[:, None].astype(self.dtype)
        blend = ad.elementwise_mul(blend, mask_col)
        if capture is not None:
            capture["weights"] = np.array(weights.data)
        h = blend
        if self.model_encoder is not None:
            h = self.model_encoder.forward(h, context_mask,
                                           training=training, rng=rng)
        for block in self.deep_blocks:
            h = block.forward(h, context_mask, training=training, rng=rng)
        return self.head(h, context_mask)

    def forward_batch(self, batch, training=False, rng=None):
        """Run each row of a QABatch, trimmed to its true lengths.

        Returns a list of (p_start, p_end) pairs whose length matches the
        row's unpadded context.
        """
        out = []
        for row in range(len(batch)):
            n = int(batch.context_mask[row].sum())
            m = int(batch.question_mask[row].sum())
            out.append(self.forward_example(
                batch.context_ids[row, :n], batch.context_mask[row, :n],
                batch.question_ids[row, :m], batch.question_mask[row, :m],
                training=training, rng=rng))
        return out

    def predict(self, batches, decode_kind=None, max_span_len=_FROM_CONFIG):
        """Decode spans for every example; returns id -> SpanPrediction.

        decode_kind defaults to the config; max_span_len likewise, with None
        meaning "no width cap".  Naive decoding can produce end < start, in
        which case the answer text is empty.
        """
        if max_span_len is _FROM_CONFIG:
            max_span_len = self.config.max_span_len
        kind = decode_kind or self.config.decode
        if kind not in DECODE_KINDS:
            raise ConfigError("unknown decode kind %r" % kind)
        predictions = {}
        for batch in batches:
            dists = self.forward_batch(batch)
            for row, (p_start, p_end) in enumerate(dists):
                example = batch.examples[row]
                tokens = example.context_tokens[:p_start.shape[0]]
                if kind == "naive":
                    start, end = decode_naive(p_start, p_end)
                    confidence = float(p_start.data[start] * p_end.data[end])
                    text = " ".join(tokens[start:end + 1]) if start <= end else ""
                    pred = SpanPrediction(start, end, confidence, text)
                else:
                    pred = decode_constrained(p_start, p_end, max_span_len,
                                              context_tokens=tokens)
                predictions[example.id] = pred
        return predictions

    def attention_weights(self, example, max_context_len=MAX_CONTEXT_LEN,
                          max_question_len=MAX_QUESTION_LEN):
        """Context-question attention for one example.

        Returns (weights, context_tokens, question_tokens) with weights shaped
        (len(context_tokens), len(question_tokens)).
        """
        ctokens = example.context_tokens[:max_context_len]
        qtokens = example.question_tokens[:max_question_len]
        if not ctokens or not qtokens:
            raise DataError("example %r has an empty side" % example.id)
        capture = {}
        self.forward_example(self.vocab.encode(ctokens),
                             np.ones(len(ctokens), dtype=bool),
                             self.vocab.encode(qtokens),
                             np.ones(len(qtokens), dtype=bool),
                             capture=capture)
        return capture["weights"], ctokens, qtokens

    def parameters(self):
        """All trainable (name, tensor) pairs; shared modules appear once."""
        named = []
        if self.pad_unk is not None:
            named.append(("embedding/pad_unk", self.pad_unk))
        if self.question_encoder is self.context_encoder:
            named.extend(self.context_encoder.params("input_encoder/"))
        else:
            named.extend(self.context_encoder.params("context_encoder/"))
            named.extend(self.question_encoder.params("question_encoder/"))
        if self.similarity_weight is not None:
            named.append(("attention/similarity_w", self.similarity_weight))
        if self.model_encoder is not None:
            named.extend(self.model_encoder.params("model_encoder/"))
        for i, block in enumerate(self.deep_blocks):
            named.extend(block.params("deep%d/" % i))
        named.extend(self.head.params("output/"))
        return named

    def param_count(self):
        return sum(t.data.size for _, t in self.parameters())

    def save(self, path, extra_meta=None):
        meta = {"config": config_to_dict(self.config),
                "vocab_tokens": self.vocab.tokens,
                "dtype": self.dtype.name}
        if extra_meta:
            meta.update(extra_meta)
        arrays = [(name, t.data) for name, t in self.parameters()]
        arrays.append(("embedding/table", self.embedding))
        save_checkpoint(path, arrays, meta)


def build_model(config, vocab, seed=0, dtype=np.float32):
    return Model(config, vocab, seed=seed, dtype=dtype)


def load_model(path):
    """Restore a model saved with Model.save."""
    arrays, meta = load_checkpoint(path)
    config = config_from_dict(meta["config"])
    if "embedding/table" not in arrays:
        raise DataError("%s: checkpoint has no embedding table" % path)
    table = arrays.pop("embedding/table")
    vocab = Vocab(meta["vocab_tokens"], table)
    model = Model(config, vocab, seed=0, dtype=np.dtype(meta.get("dtype",
                                                                 "float32")))
    # Vocab normalises its matrix to float32; restore the table verbatim so
    # float64 checkpoints stay bit-exact.
    model.embedding = table.astype(model.dtype, copy=False)
    for name, tensor in model.parameters():
        if name not in arrays:
            raise DataError("%s: checkpoint missing tensor %r" % (path, name))
        value = arrays[name]
        if tuple(value.shape) != tensor.data.shape:
            raise DataError("%s: tensor %r has shape %s, expected %s"
                            % (path, name, value.shape, tensor.data.shape))
        tensor.data = value.astype(model.dtype)
    return model
