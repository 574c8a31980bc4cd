"""SQuAD-style data handling: tokenization, vocab/embeddings, batching.

Answers live as character offsets into the raw context, so the tokenizer has
an offset-preserving variant and spans are aligned to the smallest covering
token range.  Examples whose answer cannot be aligned are dropped (counted);
at batch time, answers truncated away are dropped for training but kept for
evaluation so the metrics stay honest.
"""

import dataclasses
import json
import logging
import re

import numpy as np

from .errors import ConfigError, DataError, ParseError

log = logging.getLogger(__name__)

TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1
UNK_SEED = 13
UNK_SCALE = 0.1

MAX_CONTEXT_LEN = 400
MAX_QUESTION_LEN = 30

CACHE_FORMAT = "convqa-dataset"
CACHE_VERSION = 1


def tokenize(text):
    """Lowercased word/punctuation tokens. Idempotent on its own output."""
    return TOKEN_PATTERN.findall(text.lower())


def tokenize_with_offsets(text):
    """Tokens plus (start, end) character offsets into the ORIGINAL text.

    Token strings are lowercased but offsets index the untouched input, which
    is what answer alignment needs.
    """
    tokens = []
    offsets = []
    for match in TOKEN_PATTERN.finditer(text):
        tokens.append(match.group(0).lower())
        offsets.append((match.start(), match.end()))
    return tokens, offsets


class Vocab:
    """Token table with an aligned embedding matrix.

    Index 0 is the padding token (zero vector), index 1 the unknown token.
    """

    def __init__(self, tokens, matrix):
        if len(tokens) != matrix.shape[0]:
            raise DataError("vocab has %d tokens but %d embedding rows"
                            % (len(tokens), matrix.shape[0]))
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DataError("vocab must start with %s, %s" % (PAD_TOKEN, UNK_TOKEN))
        self.tokens = list(tokens)
        self.matrix = np.asarray(matrix, dtype=np.float32)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def lookup(self, token):
        return self.index.get(token, UNK_INDEX)

    def encode(self, tokens):
        return np.array([self.lookup(t) for t in tokens], dtype=np.int64)


def load_glove(path, dim):
    """Parse GloVe text vectors into a Vocab.

    The unknown vector is uniform(-0.1, 0.1) from a fixed seed so runs are
    reproducible; padding is all zeros.  A malformed line raises ParseError
    with its line number.
    """
    tokens = [PAD_TOKEN, UNK_TOKEN]
    rows = []
    seen = set(tokens)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != dim + 1:
                raise ParseError("expected %d values, got %d"
                                 % (dim, len(parts) - 1), line=lineno)
            token = parts[0]
            try:
                vector = np.array(parts[1:], dtype=np.float32)
            except ValueError as exc:
                raise ParseError("bad float (%s)" % exc, line=lineno) from exc
            if token in seen:
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(vector)
    rng = np.random.default_rng(UNK_SEED)
    unk = rng.uniform(-UNK_SCALE, UNK_SCALE, size=dim).astype(np.float32)
    matrix = np.zeros((len(tokens), dim), dtype=np.float32)
    matrix[UNK_INDEX] = unk
    if rows:
        matrix[2:] = np.stack(rows)
    return Vocab(tokens, matrix)


@dataclasses.dataclass
class QAExample:
    id: str
    context_tokens: list
    question_tokens: list
    gold_start: int
    gold_end: int
    answer_texts: list


def char_span_to_token_span(offsets, start_char, end_char):
    """Smallest token range covering [start_char, end_char); None if empty."""
    hits = [i for i, (s, e) in enumerate(offsets)
            if e > start_char and s < end_char]
    if not hits:
        return None
    return hits[0], hits[-1]


def load_squad(path):
    """Read a SQuAD v1.1 JSON file into QAExamples.

    The gold span comes from the first alignable answer; all answer texts are
    kept for evaluation.  Unalignable or empty examples are skipped and
    counted in the returned stats dict.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError("%s: not valid JSON (%s)" % (path, exc)) from exc
    examples = []
    skipped_unaligned = 0
    skipped_empty = 0
    try:
        articles = payload["data"]
        for article in articles:
            for paragraph in article["paragraphs"]:
                context = paragraph["context"]
                ctokens, offsets = tokenize_with_offsets(context)
                for qa in paragraph["qas"]:
                    qid = str(qa["id"])
                    qtokens = tokenize(qa["question"])
                    if not ctokens or not qtokens:
                        skipped_empty += 1
                        continue
                    answers = qa["answers"]
                    texts = [a["text"] for a in answers]
                    span = None
                    for answer in answers:
                        start = int(answer["answer_start"])
                        span = char_span_to_token_span(
                            offsets, start, start + len(answer["text"]))
                        if span is not None:
                            break
                    if span is None:
                        skipped_unaligned += 1
                        continue
                    examples.append(QAExample(qid, ctokens, qtokens,
                                              span[0], span[1], texts))
    except (KeyError, TypeError) as exc:
        raise ParseError("%s: malformed SQuAD structure (%s)" % (path, exc)) from exc
    stats = {"examples": len(examples),
             "skipped_unaligned": skipped_unaligned,
             "skipped_empty": skipped_empty}
    if skipped_unaligned or skipped_empty:
        log.warning("skipped %d unalignable and %d empty examples in %s",
                    skipped_unaligned, skipped_empty, path)
    return examples, stats


def save_examples(examples, path):
    """Cache examples as JSONL: a header line then one record per example."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": CACHE_FORMAT,
                             "version": CACHE_VERSION}) + "\n")
        for ex in examples:
            fh.write(json.dumps({
                "id": ex.id,
                "context_tokens": ex.context_tokens,
                "question_tokens": ex.question_tokens,
                "gold_start": ex.gold_start,
                "gold_end": ex.gold_end,
                "answer_texts": ex.answer_texts,
            }) + "\n")


def load_examples(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        try:
            head = json.loads(header)
        except json.JSONDecodeError as exc:
            raise ParseError("bad cache header (%s)" % exc, line=1) from exc
        if head.get("format") != CACHE_FORMAT:
            raise ParseError("not a dataset cache", line=1)
        if head.get("version") != CACHE_VERSION:
            raise ParseError("unsupported cache version %r" % head.get("version"),
                             line=1)
        examples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                examples.append(QAExample(
                    rec["id"], rec["context_tokens"], rec["question_tokens"],
                    rec["gold_start"], rec["gold_end"], rec["answer_texts"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError("bad cache record (%s)" % exc, line=lineno) from exc
    return examples


def load_dataset(path):
    """Load either a raw SQuAD JSON file or a JSONL cache, sniffing the header."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    try:
        head = json.loads(first)
        is_cache = isinstance(head, dict) and head.get("format") == CACHE_FORMAT
    except json.JSONDecodeError:
        is_cache = False
    if is_cache:
        return load_examples(path)
    examples, _ = load_squad(path)
    return examples


@dataclasses.dataclass
class QABatch:
    context_ids: np.ndarray     # (B, Nc) int64, zero padded
    question_ids: np.ndarray    # (B, Nq) int64
    context_mask: np.ndarray    # (B, Nc) bool
    question_mask: np.ndarray   # (B, Nq) bool
    gold_starts: np.ndarray     # (B,) int64
    gold_ends: np.ndarray       # (B,) int64
    examples: list

    def __len__(self):
        return len(self.examples)


def make_batches(examples, vocab, batch_size,
                 max_context_len=MAX_CONTEXT_LEN,
                 max_question_len=MAX_QUESTION_LEN,
                 training=False):
    """Group examples into padded id batches.

    Contexts/questions longer than the caps are truncated.  If truncation
    removes the gold span: training examples are dropped (nothing to learn
    from), evaluation examples are kept so they count against the metrics.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1, got %d" % batch_size)
    if max_context_len < 1 or max_question_len < 1:
        raise ConfigError("length caps must be >= 1")
    kept = []
    for ex in examples:
        ctokens = ex.context_tokens[:max_context_len]
        qtokens = ex.question_tokens[:max_question_len]
        if not ctokens or not qtokens:
            continue
        if training and ex.gold_end >= len(ctokens):
            continue
        kept.append((ex, ctokens, qtokens))
    batches = []
    for base in range(0, len(kept), batch_size):
        chunk = kept[base:base + batch_size]
        rows = len(chunk)
        nc = max(len(c) for _, c, _ in chunk)
        nq = max(len(q) for _, _, q in chunk)
        context_ids = np.zeros((rows, nc), dtype=np.int64)
        question_ids = np.zeros((rows, nq), dtype=np.int64)
        context_mask = np.zeros((rows, nc), dtype=bool)
        question_mask = np.zeros((rows, nq), dtype=bool)
        gold_starts = np.zeros(rows, dtype=np.int64)
        gold_ends = np.zeros(rows, dtype=np.int64)
        for row, (ex, ctokens, qtokens) in enumerate(chunk):
            context_ids[row, :len(ctokens)] = vocab.encode(ctokens)
            question_ids[row, :len(qtokens)] = vocab.encode(qtokens)
            context_mask[row, :len(ctokens)] = True
            question_mask[row, :len(qtokens)] = True
            gold_starts[row] = ex.gold_start
            gold_ends[row] = ex.gold_end
        batches.append(QABatch(context_ids, question_ids,
                               context_mask, question_mask,
                               gold_starts, gold_ends,
                               [ex for ex, _, _ in chunk]))
    return batches


def make_synthetic_dataset(n_examples, vocab_size=60, dim=32,
                           context_len=24, question_len=5,
                           max_answer_len=3, seed=0):
    """Small random QA task: the question repeats the answer span's tokens.

    A model with content-based context/question attention can solve it, which
    makes it a cheap overfitting and smoke-test target.  Returns
    (examples, vocab).
    """
    rng = np.random.default_rng(seed)
    words = ["w%d" % i for i in range(vocab_size)]
    tokens = [PAD_TOKEN, UNK_TOKEN] + words
    matrix = rng.uniform(-0.5, 0.5, size=(len(tokens), dim)).astype(np.float32)
    matrix[PAD_INDEX] = 0.0
    vocab = Vocab(tokens, matrix)
    examples = []
    for i in range(n_examples):
        ctokens = [words[j] for j in rng.integers(0, vocab_size, size=context_len)]
        span_len = int(rng.integers(1, max_answer_len + 1))
        start = int(rng.integers(0, context_len - span_len + 1))
        end = start + span_len - 1
        answer = ctokens[start:end + 1]
        qtokens = list(answer)
        while len(qtokens) < question_len:
            qtokens.append(words[int(rng.integers(0, vocab_size))])
        examples.append(QAExample("syn-%d" % i, ctokens, qtokens,
                                  start, end, [" ".join(answer)]))
    return examples, vocab
