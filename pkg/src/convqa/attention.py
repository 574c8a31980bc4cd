"""Context-question attention: the similarity matrix and two blend variants.

The trilinear similarity w . [q; c; q*c] is evaluated in factored form --
one rank-one term per weight block -- so the n x m x 3H concatenation never
materializes.  Attention weights over the question can be exported as CSV
heatmaps for inspection.
"""

import csv

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ParseError


def trilinear_similarity(context, question, weight):
    """Similarity matrix S[i, j] = w . [Q_j ; C_i ; Q_j * C_i].

    context is (n, h), question (m, h), weight a flat (3h,) tensor split as
    [w_q, w_c, w_cross].  Returns (n, m).  Equivalent to scoring every
    (context, question) pair through the concatenated feature vector, but
    computed as two rank-one terms plus one scaled product.
    """
    n, h = context.shape
    m, hq = question.shape
    if hq != h:
        raise DimensionError("context width %d != question width %d" % (h, hq))
    if weight.shape != (3 * h,):
        raise DimensionError("similarity weight must have shape (%d,), got %s"
                             % (3 * h, weight.shape))
    w_q = ad.reshape(ad.narrow(weight, 0, 0, h), (h, 1))
    w_c = ad.reshape(ad.narrow(weight, 0, h, h), (h, 1))
    w_x = ad.reshape(ad.narrow(weight, 0, 2 * h, h), (1, h))
    context_term = ad.matmul(context, w_c)                      # (n, 1)
    question_term = ad.transpose(ad.matmul(question, w_q))      # (1, m)
    cross = ad.matmul(ad.elementwise_mul(context, w_x),
                      ad.transpose(question))                   # (n, m)
    return ad.add(ad.add(cross, context_term), question_term)


def basic_attend(context, question, question_mask):
    """Dot-product context-to-question attention.

    Returns (blend, weights): blend is [C ; A] of width 2h where
    A = softmax(C Q^T) Q, and weights the (n, m) attention rows.
    """
    n = context.shape[0]
    m = question.shape[0]
    qmask = np.broadcast_to(np.asarray(question_mask, dtype=bool), (n, m))
    scores = ad.matmul(context, ad.transpose(question))
    weights = ad.softmax(scores, mask=qmask)
    attended = ad.matmul(weights, question)
    blend = ad.concat([context, attended], axis=-1)
    return blend, weights


def bidirectional_attend(context, question, context_mask, question_mask, weight):
    """Trilinear attention in both directions.

    S is the trilinear similarity; rows softmaxed over the question give
    context-to-question weights, columns softmaxed over the context give the
    reverse.  With A = rows . Q and B = rows . (cols^T . C), the blend is
    [C ; A ; C*A ; C*B] of width 4h.  Returns (blend, rows).
    """
    n = context.shape[0]
    m = question.shape[0]
    qmask = np.broadcast_to(np.asarray(question_mask, dtype=bool), (n, m))
    cmask = np.broadcast_to(np.asarray(context_mask, dtype=bool), (m, n))
    sim = trilinear_similarity(context, question, weight)
    rows = ad.softmax(sim, mask=qmask)                       # (n, m)
    cols_t = ad.softmax(ad.transpose(sim), mask=cmask)       # (m, n)
    attended = ad.matmul(rows, question)                     # A: (n, h)
    pooled = ad.matmul(cols_t, context)                      # (m, h)
    requested = ad.matmul(rows, pooled)                      # B: (n, h)
    blend = ad.concat([context, attended,
                       ad.elementwise_mul(context, attended),
                       ad.elementwise_mul(context, requested)], axis=-1)
    return blend, rows


def export_attention_heatmap(weights, context_tokens, question_tokens, path,
                             image_path=None):
    """Write attention weights as CSV: header = question tokens, one row per
    context token with the token in column 0.  Optionally render a PNG."""
    matrix = np.asarray(weights.data if isinstance(weights, Tensor) else weights,
                        dtype=np.float64)
    if matrix.shape != (len(context_tokens), len(question_tokens)):
        raise DimensionError("weights %s do not match %d context x %d question"
                             " tokens" % (matrix.shape, len(context_tokens),
                                          len(question_tokens)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["token"] + list(question_tokens))
        for token, row in zip(context_tokens, matrix):
            writer.writerow([token] + ["%.8f" % v for v in row])
    if image_path is not None:
        _render_heatmap(matrix, context_tokens, question_tokens, image_path)


def read_attention_heatmap(path):
    """Inverse of export_attention_heatmap (CSV part).

    Returns (matrix, context_tokens, question_tokens).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty heatmap file", line=1) from None
        if not header or header[0] != "token":
            raise ParseError("bad heatmap header", line=1)
        question_tokens = header[1:]
        context_tokens = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError("expected %d columns, got %d"
                                 % (len(header), len(row)), line=lineno)
            context_tokens.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError("bad float (%s)" % exc, line=lineno) from exc
    matrix = np.array(rows, dtype=np.float64) if rows else \
        np.zeros((0, len(question_tokens)))
    return matrix, context_tokens, question_tokens


def _render_heatmap(matrix, context_tokens, question_tokens, image_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ParseError("matplotlib is required for heatmap images (%s)"
                         % exc) from exc
    height = max(2.0, 0.22 * len(context_tokens))
    width = max(3.0, 0.6 * len(question_tokens))
    fig, ax = plt.subplots(figsize=(width, height))
    im = ax.imshow(matrix, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(question_tokens)))
    ax.set_xticklabels(question_tokens, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(context_tokens)))
    ax.set_yticklabels(context_tokens, fontsize=6)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(image_path, dpi=150)
    plt.close(fig)
