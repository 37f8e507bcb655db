import numpy as np
import pytest

from dcpl.beam import decode_beam, exhaustive_search, sequence_logprob
from dcpl.errors import EmptyHypothesis, InvalidConfig
from dcpl.forward import decode_forced, encode, greedy_decode

from conftest import toy_model


def _case(seed, vocab, **over):
    m = toy_model(seed, vocab_size=vocab, bias_scale=1.0, gain_scale=1.0, **over)
    src = np.random.default_rng(seed).integers(1, vocab, size=4).tolist()
    return m, encode(m, src)


@pytest.mark.parametrize("seed", range(10))
def test_beam_one_is_greedy(seed):
    m, mem = _case(seed, 12)
    tokens, complete = greedy_decode(m, mem, 8)
    res = decode_beam(m, mem, beam=1, max_len=8)
    assert res.tokens == tokens and res.complete == complete


@pytest.mark.parametrize("length_norm", [0.0, 1.0])
@pytest.mark.parametrize("seed", range(6))
def test_wide_beam_matches_enumeration_v4_len3(seed, length_norm):
    # beam >= 4**2 never prunes at this size, so the beam is a full search
    m, mem = _case(seed, 4)
    res = decode_beam(m, mem, beam=16, max_len=3, length_norm=length_norm)
    tokens, score = exhaustive_search(m, mem, 3, length_norm)
    assert res.tokens == tokens
    assert res.score == pytest.approx(score, abs=1e-12)


def test_score_and_trace_of_result():
    m, mem = _case(3, 6)
    res = decode_beam(m, mem, beam=4, max_len=5)
    if res.complete:
        raw = sequence_logprob(m, mem, res.tokens)
        assert res.score == pytest.approx(raw / (len(res.tokens) + 1), abs=1e-12)
    ref = decode_forced(m, mem, res.tokens)
    np.testing.assert_array_equal(res.trace.e, ref.e)


def test_incomplete_and_strict():
    for seed in range(50):
        m, mem = _case(seed, 12)
        tokens, complete = greedy_decode(m, mem, 1)
        if not complete:
            break
    res = decode_beam(m, mem, beam=1, max_len=1)
    assert not res.complete and res.tokens == tokens
    with pytest.raises(EmptyHypothesis):
        decode_beam(m, mem, beam=1, max_len=1, strict=True)
    with pytest.raises(InvalidConfig):
        decode_beam(m, mem, beam=0)
