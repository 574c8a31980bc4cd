"""Shared fixtures and small builders for the test suite."""

import json

import numpy as np

from convqa.data import Vocab, tokenize

# The classic Tesla passage; a convenient public-domain QA fixture because
# its two questions have unambiguous single-token answers.
TESLA_PASSAGE = (
    "Nikola Tesla (Serbian Cyrillic: Никола "
    "Тесла; 10 July 1856–7 January 1943) was "
    "a Serbian American inventor, electrical engineer, mechanical engineer, "
    "physicist, and futurist who is best known for his contributions to the "
    "design of the modern alternating current (AC) electricity supply system.")

TESLA_Q1 = "In what year was Nikola Tesla born?"
TESLA_Q2 = "What was Nikola Tesla's ethnicity?"


def tesla_payload():
    """The fixture as a SQuAD-format JSON payload (two questions)."""
    def answers(text):
        start = TESLA_PASSAGE.index(text)
        return [{"text": text, "answer_start": start} for _ in range(3)]

    return {
        "version": "1.1",
        "data": [{
            "title": "Nikola_Tesla",
            "paragraphs": [{
                "context": TESLA_PASSAGE,
                "qas": [
                    {"id": "tesla-q1", "question": TESLA_Q1,
                     "answers": answers("1856")},
                    {"id": "tesla-q2", "question": TESLA_Q2,
                     "answers": answers("Serbian")},
                ],
            }],
        }],
    }


def write_tesla_squad(path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tesla_payload(), fh, ensure_ascii=False)
    return path


def tiny_vocab(tokens=None, dim=8, seed=0):
    """A Vocab over the given tokens (plus pad/unk) with random vectors."""
    rng = np.random.default_rng(seed)
    words = sorted(set(tokens or []))
    full = ["<pad>", "<unk>"] + words
    matrix = rng.uniform(-0.5, 0.5, size=(len(full), dim)).astype(np.float32)
    matrix[0] = 0.0
    return Vocab(full, matrix)


def vocab_for_texts(texts, dim=8, seed=0):
    tokens = []
    for text in texts:
        tokens.extend(tokenize(text))
    return tiny_vocab(tokens, dim=dim, seed=seed)


def write_glove(path, vocab_tokens, dim=8, seed=0):
    """Write a tiny GloVe-format embedding file covering vocab_tokens."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab_tokens:
            vec = rng.uniform(-0.5, 0.5, size=dim)
            fh.write(token + " " + " ".join("%.5f" % v for v in vec) + "\n")
    return path
