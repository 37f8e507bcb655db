"""Beam search with length normalization, plus an exhaustive reference search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import EmptyHypothesis, InvalidConfig
from .forward import (ForwardTrace, _run_decoder, decode_forced, decoder_input, log_softmax,
                      logits_of, next_token_logprobs)
from .model import EOS_ID, Model


@dataclass
class BeamResult:
    tokens: List[int]  # hypothesis without the terminating EOS
    score: float  # length-normalized log-probability
    complete: bool  # False when no hypothesis reached EOS within max_len
    trace: Optional[ForwardTrace] = None


def normalized_score(logprob: float, length: int, length_norm: float) -> float:
    return logprob / (length ** length_norm) if length_norm else logprob


def _rank_key(score, tokens):
    return (-score, tuple(tokens))


def decode_beam(model: Model, memory: np.ndarray, beam: int = 12, max_len: int = 32,
                length_norm: float = 1.0, src_ids=(), strict: bool = False,
                with_trace: bool = True) -> BeamResult:
    """Beam search over the decoder.

    At every step each live hypothesis is expanded by the whole vocabulary and
    the ``beam`` best expansions (by summed log-probability, ties broken on
    the token sequence) are kept. Expansions ending in EOS are moved to the
    finished pool; search stops when no live hypothesis remains or after
    ``max_len`` tokens (EOS included). The result is the finished hypothesis
    with the best ``sum_logprob / length ** length_norm``.

    When nothing finishes, the best live hypothesis is returned with
    ``complete=False``; with ``strict`` set, ``EmptyHypothesis`` is raised.
    The trace is that of a forced pass over the returned hypothesis.
    """
    if beam < 1:
        raise InvalidConfig("beam must be >= 1")
    if max_len < 1:
        raise InvalidConfig("max_len must be >= 1")
    max_len = min(max_len, model.config.max_positions - 1)
    V = model.config.vocab_size

    alive: List[Tuple[Tuple[int, ...], float]] = [((), 0.0)]
    finished: List[Tuple[float, Tuple[int, ...], float]] = []
    for step in range(1, max_len + 1):
        prefixes = np.stack([decoder_input(toks) for toks, _ in alive])
        logp = next_token_logprobs(model, memory, prefixes)
        cands = []
        for (toks, score), row in zip(alive, logp):
            for v in range(V):
                cands.append((score + float(row[v]), toks + (v,)))
        cands.sort(key=lambda c: _rank_key(c[0], c[1]))
        alive = []
        for score, toks in cands[:beam]:
            if toks[-1] == EOS_ID:
                body = toks[:-1]
                finished.append((normalized_score(score, step, length_norm), body, score))
            else:
                alive.append((toks, score))
        if not alive:
            break

    if finished:
        best_score, best, _ = min(finished, key=lambda f: _rank_key(f[0], f[1]))
        complete = True
    else:
        if strict:
            raise EmptyHypothesis(f"no hypothesis reached EOS within {max_len} tokens")
        best, raw = alive[0]
        best_score = normalized_score(raw, len(best), length_norm)
        complete = False
    tokens = list(best)
    trace = decode_forced(model, memory, tokens, src_ids) if with_trace else None
    return BeamResult(tokens, best_score, complete, trace)


def sequence_logprob(model: Model, memory: np.ndarray, tokens, finish: bool = True) -> float:
    """Summed log-probability of ``tokens`` (plus EOS when ``finish``)."""
    trace_ids = decoder_input(tokens)
    targets = list(tokens) + ([EOS_ID] if finish else [])
    lp = next_token_logprobs_all(model, memory, trace_ids[: len(targets)])
    return float(sum(lp[i, t] for i, t in enumerate(targets)))


def next_token_logprobs_all(model: Model, memory, ids) -> np.ndarray:
    """Next-token log-probabilities at every position of one decoder input."""
    final, _ = _run_decoder(model, memory, np.asarray(ids, dtype=np.int64)[None, :], record=False)
    return log_softmax(logits_of(model, final[0]))


def exhaustive_search(model: Model, memory: np.ndarray, max_len: int,
                      length_norm: float = 1.0):
    """Best completed hypothesis by brute-force enumeration.

    Enumerates every sequence of non-EOS tokens of length ``0..max_len-1``
    followed by EOS. Returns ``(tokens, score)``.
    """
    V = model.config.vocab_size
    words = [v for v in range(V) if v != EOS_ID]
    best = None
    for n in range(max_len):
        for body in itertools.product(words, repeat=n):
            raw = sequence_logprob(model, memory, body)
            key = _rank_key(normalized_score(raw, n + 1, length_norm), body)
            if best is None or key < best:
                best = key
    return list(best[1]), -best[0]
