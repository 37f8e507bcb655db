import random

import pytest
from hypothesis import given, settings, strategies as st

from dcpl.errors import DuplicateKey, EmptyCorpus, EmptyInput, LengthMismatch, MalformedRow
from dcpl.scoring import (ScoreTable, bleu_corpus, chrf_sentence, load_scores, parse_scores,
                          save_scores)


def test_bleu_examples():
    assert bleu_corpus([[1, 2, 3, 4, 5]], [[1, 2, 3, 4, 5]]) == pytest.approx(100.0)
    assert bleu_corpus([[1, 2]], [[3, 4]]) == 0.0
    assert bleu_corpus([[1, 2, 3, 4]], [[1, 2, 3, 5]]) == 0.0
    # hand count with add-one on orders 2..4: 3/4, 3/4, 2/3, 1/2 and no brevity penalty
    hand = 100 * (3 / 4 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
    assert bleu_corpus([[1, 2, 3, 4]], [[1, 2, 3, 5]], smooth=True) == pytest.approx(hand,
                                                                                    abs=1e-12)
    # brevity penalty: 4 hypothesis tokens against 6 reference tokens
    bp = bleu_corpus([[1, 2, 3, 4]], [[1, 2, 3, 4, 5, 6]])
    assert bp == pytest.approx(100 * 2.718281828459045 ** (1 - 6 / 4), rel=1e-12)
    with pytest.raises(LengthMismatch):
        bleu_corpus([[1]], [])
    with pytest.raises(EmptyCorpus):
        bleu_corpus([], [])


seqs = st.lists(st.integers(1, 6), min_size=1, max_size=8)


@settings(max_examples=60)
@given(st.lists(st.tuples(seqs, seqs), min_size=1, max_size=5), st.integers(0, 99))
def test_bleu_bounds_and_order_invariance(pairs, seed):
    hyps, refs = zip(*pairs)
    score = bleu_corpus(hyps, refs)
    assert 0 <= score <= 100 + 1e-9
    shuffled = pairs[:]
    random.Random(seed).shuffle(shuffled)
    assert bleu_corpus(*zip(*shuffled)) == pytest.approx(score, abs=1e-12)
    assert bleu_corpus(hyps, hyps) == pytest.approx(100.0)


def test_chrf_examples():
    assert chrf_sentence("abc", "abc") == pytest.approx(100.0)
    assert chrf_sentence("abc", "xyz") == 0.0
    # order 1: P = 2/2, R = 2/3; order 2: P = 1/1, R = 1/2
    P, R = 1.0, (2 / 3 + 1 / 2) / 2
    assert chrf_sentence("ab", "abc", n=2) == pytest.approx(100 * 5 * P * R / (4 * P + R),
                                                            abs=1e-12)
    assert chrf_sentence("a b", "ab") == pytest.approx(100.0)
    with pytest.raises(EmptyInput):
        chrf_sentence("", "abc")


@settings(max_examples=60)
@given(seqs, seqs)
def test_chrf_bounds(h, r):
    v = chrf_sentence(h, r)
    assert 0 <= v <= 100 + 1e-9
    assert chrf_sentence(h, h) == pytest.approx(100.0)


def test_score_table_io(tmp_path):
    t = parse_scores("checkpoint,sentence_id,score\n0,*,1.5\n1,*,2.5\n2,*,0.1\n")
    assert t.granularity == "corpus" and t.checkpoints == [0, 1, 2]
    save_scores(t, tmp_path / "s.csv")
    assert load_scores(tmp_path / "s.csv").entries == t.entries
    sent = ScoreTable("sentence", {(0, "a"): 0.1, (1, "a"): 0.2})
    assert parse_scores(sent.to_csv()).entries == sent.entries


@pytest.mark.parametrize("text,err", [
    ("checkpoint,sentence_id,score\n0,*,1\n0,*,2\n", DuplicateKey),
    ("checkpoint,sentence_id,score\n0,*,abc\n", MalformedRow),
    ("checkpoint,sentence_id,score\nx,*,1\n", MalformedRow),
    ("ckpt,id,score\n0,*,1\n", MalformedRow),
    ("checkpoint,sentence_id,score\n0,*,1\n1,s1,2\n", MalformedRow),
    ("checkpoint,sentence_id,score\n0,*\n", MalformedRow),
])
def test_score_errors(text, err):
    with pytest.raises(err):
        parse_scores(text)
