"""Answer span scoring and decoding.

The output head projects the encoded context down and runs two wide
convolutions to produce start/end logits; masked softmax turns those into
per-position distributions.  Decoding picks the span maximizing
p_start[i] * p_end[j]: the constrained decoder enforces i <= j (optionally a
maximum width) exactly, the naive decoder takes independent argmaxes and is
kept as a diagnostic.
"""

import dataclasses
import json

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, ParseError
from .layers import Conv1D, Linear

DEFAULT_MAX_SPAN_LEN = 17


@dataclasses.dataclass
class SpanPrediction:
    start: int
    end: int
    confidence: float
    answer_text: str = ""


class OutputHead:
    """Projection plus two wide convolutions producing span distributions.

    kernel_width may be even here: the asymmetric padding (ceil, floor) keeps
    the output aligned with the input positions.  kernel_width=1 degrades to
    a purely pointwise scorer.
    """

    def __init__(self, input_dim, rng, kernel_width=20, proj_dim=20,
                 dtype=np.float32):
        if kernel_width < 1:
            raise ConfigError("output kernel_width must be >= 1, got %d"
                              % kernel_width)
        self.kernel_width = kernel_width
        self.pad_left = kernel_width // 2
        self.pad_right = kernel_width - 1 - self.pad_left
        self.proj = Linear(input_dim, proj_dim, rng, dtype)
        self.start_conv = Conv1D(kernel_width, proj_dim, 1, rng, dtype)
        self.end_conv = Conv1D(kernel_width, proj_dim, 1, rng, dtype)

    def __call__(self, encoded, mask):
        """Return (p_start, p_end), each a (t,) masked distribution."""
        mask = np.asarray(mask, dtype=bool)
        t = encoded.shape[0]
        h = self.proj(encoded)
        start_logits = ad.reshape(
            self.start_conv(h, self.pad_left, self.pad_right), (t,))
        end_logits = ad.reshape(
            self.end_conv(h, self.pad_left, self.pad_right), (t,))
        return ad.softmax(start_logits, mask=mask), ad.softmax(end_logits, mask=mask)

    def params(self, prefix=""):
        return (self.proj.params(prefix + "proj/")
                + self.start_conv.params(prefix + "start/")
                + self.end_conv.params(prefix + "end/"))


def span_distributions(head, encoded, mask):
    return head(encoded, mask)


def _as_probs(p):
    arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError("expected a 1-d distribution, got shape %s"
                             % (arr.shape,))
    return arr


def decode_constrained(p_start, p_end, max_span_len=DEFAULT_MAX_SPAN_LEN,
                       context_tokens=None):
    """Maximize p_start[i] * p_end[j] over i <= j (< max_span_len wide).

    max_span_len=None disables the width cap.  Ties resolve to the smallest
    start, then the smallest end, matching an exhaustive scan in (i, j)
    order with strict improvement.
    """
    ps = _as_probs(p_start)
    pe = _as_probs(p_end)
    if ps.shape != pe.shape:
        raise DimensionError("start (%s) and end (%s) distributions differ"
                             % (ps.shape, pe.shape))
    n = ps.shape[0]
    if n == 0:
        raise DimensionError("cannot decode an empty distribution")
    if max_span_len is not None and max_span_len < 1:
        raise ConfigError("max_span_len must be >= 1 or None, got %r"
                          % max_span_len)
    best = -1.0
    best_i = best_j = 0
    if max_span_len is None:
        # Running smallest argmax of p_start over the prefix; equivalent to
        # the full pair scan but linear time.
        top = 0
        for j in range(n):
            if ps[j] > ps[top]:
                top = j
            score = ps[top] * pe[j]
            if score > best:
                best, best_i, best_j = score, top, j
    else:
        for j in range(n):
            lo = max(0, j - max_span_len + 1)
            for i in range(lo, j + 1):
                score = ps[i] * pe[j]
                if score > best:
                    best, best_i, best_j = score, i, j
    text = ""
    if context_tokens is not None:
        text = " ".join(context_tokens[best_i:best_j + 1])
    return SpanPrediction(best_i, best_j, float(best), text)


def decode_constrained_exhaustive(p_start, p_end,
                                  max_span_len=DEFAULT_MAX_SPAN_LEN):
    """Quadratic reference scan over all (i, j) pairs; oracle for the above."""
    ps = _as_probs(p_start)
    pe = _as_probs(p_end)
    n = ps.shape[0]
    best = -1.0
    best_i = best_j = 0
    for i in range(n):
        for j in range(i, n):
            if max_span_len is not None and j - i + 1 > max_span_len:
                break
            score = ps[i] * pe[j]
            if score > best:
                best, best_i, best_j = score, i, j
    return SpanPrediction(best_i, best_j, float(best), "")


def decode_naive(p_start, p_end):
    """Independent argmaxes; may return end < start."""
    ps = _as_probs(p_start)
    pe = _as_probs(p_end)
    return int(np.argmax(ps)), int(np.argmax(pe))


def out_of_order_rate(pairs):
    """Fraction of (start, end) pairs with end < start."""
    pairs = list(pairs)
    if not pairs:
        return 0.0
    bad = sum(1 for start, end in pairs if end < start)
    return bad / len(pairs)


def write_predictions(path, answers):
    """Plain id -> answer-text JSON, the shape evaluation expects."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(answers, fh, ensure_ascii=False, indent=0)


def read_predictions(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError("%s: not valid JSON (%s)" % (path, exc)) from exc
    if not isinstance(payload, dict):
        raise ParseError("%s: predictions must be an id -> answer object" % path)
    return {str(k): str(v) for k, v in payload.items()}


def write_confidences(path, predictions):
    """Per-id span details (answer, confidence, start, end) as JSON."""
    payload = {qid: {"answer": p.answer_text, "confidence": p.confidence,
                     "start": p.start, "end": p.end}
               for qid, p in predictions.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=0)


def read_confidences(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError("%s: not valid JSON (%s)" % (path, exc)) from exc
    if not isinstance(payload, dict):
        raise ParseError("%s: confidences must be an id -> details object" % path)
    out = {}
    for qid, rec in payload.items():
        try:
            out[str(qid)] = SpanPrediction(int(rec["start"]), int(rec["end"]),
                                           float(rec["confidence"]),
                                           str(rec["answer"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError("%s: bad confidence record for %r (%s)"
                             % (path, qid, exc)) from exc
    return out
