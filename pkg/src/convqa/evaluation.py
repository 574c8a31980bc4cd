"""Exact-match / F1 scoring and confidence-based ensembling.

Scoring follows the standard extractive-QA recipe: answers are normalized
(lowercase, strip punctuation, drop articles, collapse whitespace), EM is
string equality after normalization, F1 is bag-of-tokens overlap, and every
prediction scores against its best-matching gold answer.
"""

import collections
import dataclasses
import re
import string

from .errors import DataError

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNC_TABLE = {ord(ch): None for ch in string.punctuation}


def normalize_answer(text):
    """Lowercase, remove punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNC_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction, gold):
    return float(normalize_answer(prediction) == normalize_answer(gold))


def f1_score(prediction, gold):
    """Token-bag F1 between one prediction and one gold answer."""
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    common = collections.Counter(pred_tokens) & collections.Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def em_f1(prediction, golds):
    """(EM, F1) for one prediction, each the max over the gold answers."""
    if not golds:
        raise DataError("example has no gold answers")
    em = max(exact_match(prediction, g) for g in golds)
    f1 = max(f1_score(prediction, g) for g in golds)
    return em, f1


@dataclasses.dataclass
class EvalReport:
    em: float
    f1: float
    count: int
    missing: int


def evaluate(predictions, examples):
    """Average EM/F1 of an id -> answer-text map against gold examples.

    Examples without a prediction score zero and are tallied in ``missing``.
    """
    if not examples:
        raise DataError("cannot evaluate an empty example list")
    total_em = 0.0
    total_f1 = 0.0
    missing = 0
    for example in examples:
        if example.id not in predictions:
            missing += 1
            continue
        em, f1 = em_f1(predictions[example.id], example.answer_texts)
        total_em += em
        total_f1 += f1
    count = len(examples)
    return EvalReport(total_em / count, total_f1 / count, count, missing)


def ensemble(members):
    """Combine per-model span predictions by taking, per question, the
    answer whose start*end confidence is highest across members.

    members is a list of id -> SpanPrediction maps; the result covers the
    union of ids.  Ties keep the earliest member's answer.
    """
    if not members:
        raise DataError("ensemble of zero members")
    combined = {}
    for member in members:
        for qid, pred in member.items():
            best = combined.get(qid)
            if best is None or pred.confidence > best.confidence:
                combined[qid] = pred
    return combined


def format_report(report, label=""):
    prefix = f"{label}: " if label else ""
    line = f"{prefix}em {report.em:.4f}  f1 {report.f1:.4f}  ({report.count} examples"
    if report.missing:
        line += f", {report.missing} missing predictions"
    return line + ")"
