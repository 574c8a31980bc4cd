"""Tokenization, vocab/embeddings, dataset loading, and batching."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from convqa.data import (MAX_CONTEXT_LEN, PAD_INDEX, UNK_INDEX, QAExample,
                         char_span_to_token_span, load_dataset, load_examples,
                         load_glove, load_squad, make_batches,
                         make_synthetic_dataset, save_examples, tokenize,
                         tokenize_with_offsets)
from convqa.errors import ConfigError, DataError, ParseError


class TestTokenize:
    def test_words_and_punctuation(self):
        assert tokenize("Hello, world!") == ["hello", ",", "world", "!"]

    def test_numbers_and_dashes(self):
        assert tokenize("1856–7 January") == ["1856", "–", "7",
                                                   "january"]

    def test_apostrophes_split(self):
        assert tokenize("Tesla's") == ["tesla", "'", "s"]

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=80))
    def test_retokenizing_joined_tokens_is_stable(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=80))
    def test_offsets_index_original_text(self, text):
        tokens, offsets = tokenize_with_offsets(text)
        assert len(tokens) == len(offsets)
        for token, (start, end) in zip(tokens, offsets):
            assert text[start:end].lower() == token
        # offsets are ordered and non-overlapping
        for (s1, e1), (s2, e2) in zip(offsets, offsets[1:]):
            assert e1 <= s2

    def test_offsets_tokens_match_plain_tokenizer_on_ascii(self):
        text = "The quick brown fox, 1856!"
        assert tokenize_with_offsets(text)[0] == tokenize(text)


class TestGlove:
    def test_load_and_lookup(self, tmp_path):
        path = tmp_path / "vectors.txt"
        helpers.write_glove(path, ["the", "cat", "sat"], dim=4)
        vocab = load_glove(path, 4)
        assert len(vocab) == 5  # pad, unk, 3 words
        assert vocab.dim == 4
        assert vocab.tokens == ["<pad>", "<unk>", "the", "cat", "sat"]
        assert vocab.lookup("cat") == 3
        assert vocab.lookup("dog") == UNK_INDEX
        np.testing.assert_array_equal(vocab.matrix[PAD_INDEX], np.zeros(4))

    def test_unk_vector_is_deterministic(self, tmp_path):
        path = tmp_path / "vectors.txt"
        helpers.write_glove(path, ["a", "b"], dim=6)
        first = load_glove(path, 6).matrix[UNK_INDEX]
        second = load_glove(path, 6).matrix[UNK_INDEX]
        np.testing.assert_array_equal(first, second)
        assert (np.abs(first) <= 0.1).all() and np.abs(first).max() > 0

    def test_wrong_dimension_reports_line(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("good 1.0 2.0\nbad 1.0 2.0 3.0\n")
        with pytest.raises(ParseError) as err:
            load_glove(path, 2)
        assert "line 2" in str(err.value)

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("ok 1.0 2.0\nbroken 1.0 oops\n")
        with pytest.raises(ParseError) as err:
            load_glove(path, 2)
        assert "line 2" in str(err.value)

    def test_duplicate_token_keeps_first(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("dup 1.0 1.0\ndup 9.0 9.0\n")
        vocab = load_glove(path, 2)
        np.testing.assert_array_equal(vocab.matrix[vocab.lookup("dup")],
                                      [1.0, 1.0])

    def test_encode(self, tmp_path):
        path = tmp_path / "vectors.txt"
        helpers.write_glove(path, ["cat"], dim=2)
        vocab = load_glove(path, 2)
        np.testing.assert_array_equal(vocab.encode(["cat", "dog"]),
                                      [vocab.lookup("cat"), UNK_INDEX])


class TestCharSpanAlignment:
    OFFSETS = [(0, 3), (4, 9), (10, 14)]  # "the quick brown"-ish

    def test_exact_token(self):
        assert char_span_to_token_span(self.OFFSETS, 4, 9) == (1, 1)

    def test_partial_overlap_still_covers(self):
        assert char_span_to_token_span(self.OFFSETS, 6, 8) == (1, 1)

    def test_multi_token(self):
        assert char_span_to_token_span(self.OFFSETS, 0, 12) == (0, 2)

    def test_whitespace_only_region(self):
        assert char_span_to_token_span(self.OFFSETS, 3, 4) is None

    def test_beyond_text(self):
        assert char_span_to_token_span(self.OFFSETS, 50, 55) is None


class TestLoadSquad:
    def test_fixture_loads_and_aligns(self, tmp_path):
        path = helpers.write_tesla_squad(tmp_path / "squad.json")
        examples, stats = load_squad(path)
        assert stats == {"examples": 2, "skipped_unaligned": 0,
                         "skipped_empty": 0}
        by_id = {e.id: e for e in examples}
        q1 = by_id["tesla-q1"]
        assert q1.context_tokens[q1.gold_start:q1.gold_end + 1] == ["1856"]
        assert q1.answer_texts == ["1856"] * 3
        q2 = by_id["tesla-q2"]
        assert q2.context_tokens[q2.gold_start:q2.gold_end + 1] == ["serbian"]
        assert q2.question_tokens[0] == "what"

    def test_unalignable_answer_skipped(self, tmp_path):
        payload = helpers.tesla_payload()
        bad = len(helpers.TESLA_PASSAGE) + 10
        for answer in payload["data"][0]["paragraphs"][0]["qas"][0]["answers"]:
            answer["answer_start"] = bad
        path = tmp_path / "squad.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        examples, stats = load_squad(path)
        assert stats["skipped_unaligned"] == 1
        assert len(examples) == 1

    def test_second_answer_used_when_first_unalignable(self, tmp_path):
        payload = helpers.tesla_payload()
        qa = payload["data"][0]["paragraphs"][0]["qas"][0]
        qa["answers"][0]["answer_start"] = len(helpers.TESLA_PASSAGE) + 10
        path = tmp_path / "squad.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        examples, stats = load_squad(path)
        assert stats["skipped_unaligned"] == 0
        q1 = next(e for e in examples if e.id == "tesla-q1")
        assert q1.context_tokens[q1.gold_start] == "1856"

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("this is not json")
        with pytest.raises(ParseError):
            load_squad(path)

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"data": [{"paragraphs": [{}]}]}))
        with pytest.raises(ParseError):
            load_squad(path)


class TestCache:
    def test_round_trip_exact(self, tmp_path):
        source = helpers.write_tesla_squad(tmp_path / "squad.json")
        examples, _ = load_squad(source)
        cache = tmp_path / "cache.jsonl"
        save_examples(examples, cache)
        assert load_examples(cache) == examples

    def test_load_dataset_sniffs_both_formats(self, tmp_path):
        source = helpers.write_tesla_squad(tmp_path / "squad.json")
        examples, _ = load_squad(source)
        cache = tmp_path / "cache.jsonl"
        save_examples(examples, cache)
        assert load_dataset(source) == examples
        assert load_dataset(cache) == examples

    def test_bad_header(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        path.write_text('{"format": "something-else"}\n')
        with pytest.raises(ParseError) as err:
            load_examples(path)
        assert "line 1" in str(err.value)

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        path.write_text('{"format": "convqa-dataset", "version": 1}\n'
                        '{"id": "x"}\n')
        with pytest.raises(ParseError) as err:
            load_examples(path)
        assert "line 2" in str(err.value)


def example(i, n_context=10, n_question=4, gold=(2, 4)):
    return QAExample("ex-%d" % i, ["w%d" % j for j in range(n_context)],
                     ["q%d" % j for j in range(n_question)],
                     gold[0], gold[1], ["w2 w3 w4"])


class TestMakeBatches:
    def test_padding_and_masks(self):
        vocab = helpers.tiny_vocab(["w%d" % i for i in range(12)]
                                   + ["q%d" % i for i in range(6)])
        examples = [example(0, 10, 4), example(1, 7, 6)]
        (batch,) = make_batches(examples, vocab, 4)
        assert batch.context_ids.shape == (2, 10)
        assert batch.question_ids.shape == (2, 6)
        assert batch.context_mask[1].sum() == 7
        assert (batch.context_ids[1, 7:] == PAD_INDEX).all()
        assert not batch.context_mask[1, 7:].any()
        assert batch.gold_starts.tolist() == [2, 2]

    def test_batch_grouping(self):
        vocab = helpers.tiny_vocab([])
        batches = make_batches([example(i) for i in range(5)], vocab, 2)
        assert [len(b) for b in batches] == [2, 2, 1]

    def test_truncated_answer_dropped_for_training(self):
        vocab = helpers.tiny_vocab([])
        examples = [example(0, n_context=30, gold=(25, 27)), example(1)]
        train = make_batches(examples, vocab, 4, max_context_len=20,
                             training=True)
        assert [e.id for b in train for e in b.examples] == ["ex-1"]
        evaluation = make_batches(examples, vocab, 4, max_context_len=20,
                                  training=False)
        assert len(evaluation[0]) == 2  # kept: counts against the metrics

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            make_batches([example(0)], helpers.tiny_vocab([]), 0)

    def test_unknown_tokens_map_to_unk(self):
        vocab = helpers.tiny_vocab(["w0"])
        (batch,) = make_batches([example(0)], vocab, 1)
        assert batch.context_ids[0, 1] == UNK_INDEX


class TestSynthetic:
    def test_question_repeats_answer(self):
        examples, vocab = make_synthetic_dataset(20, seed=5)
        assert len(examples) == 20
        for ex in examples:
            answer = ex.context_tokens[ex.gold_start:ex.gold_end + 1]
            assert ex.question_tokens[:len(answer)] == answer
            assert ex.answer_texts == [" ".join(answer)]
            assert 0 <= ex.gold_start <= ex.gold_end < len(ex.context_tokens)
        assert vocab.matrix.dtype == np.float32

    def test_deterministic(self):
        a, _ = make_synthetic_dataset(5, seed=9)
        b, _ = make_synthetic_dataset(5, seed=9)
        assert a == b
