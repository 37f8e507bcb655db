"""Corpus-level plumbing: decode, decompose and reduce to indicator values."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .beam import decode_beam
from .decomp_sl import SL_TERMS, decompose_sl
from .decomp_tok import TOK_TERMS, decompose_tok
from .errors import EmptyCorpus, InvalidManifest, ZeroNorm
from .forward import ForwardTrace, decode_forced, encode
from .indicators import INDICATORS, IndicatorSeries, corpus_mean, indicator_rows
from .io import Sentence, validate_corpus
from .model import Model

TERMS = {"sl": SL_TERMS, "tok": TOK_TERMS}
DEFAULT_BEAM = 12


def worker_count(requested: Optional[int] = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("DCPL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidManifest(f"DCPL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items: Sequence, workers: Optional[int] = None) -> list:
    """Order-preserving map over a thread pool."""
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def default_max_len(model: Model, src_len: int) -> int:
    return max(1, min(2 * src_len + 10, model.config.max_positions - 1))


def decode_sentence(model: Model, sent: Sentence, mode: str = "forced", beam: int = DEFAULT_BEAM,
                    max_len: Optional[int] = None, length_norm: float = 1.0):
    """Return ``(trace, hypothesis, complete)`` for one sentence.

    In forced mode the hypothesis is the gold target.
    """
    memory = encode(model, sent.src_ids)
    if mode == "forced":
        return decode_forced(model, memory, sent.tgt_ids, sent.src_ids), list(sent.tgt_ids), True
    if mode == "beam":
        ml = max_len or default_max_len(model, len(sent.src_ids))
        res = decode_beam(model, memory, beam=beam, max_len=ml, length_norm=length_norm,
                          src_ids=sent.src_ids)
        return res.trace, res.tokens, res.complete
    raise InvalidManifest(f"unknown decoding mode {mode!r}")


def final_terms(model: Model, trace: ForwardTrace, kind: str):
    """``(terms, reference)`` of the final embeddings under decomposition ``kind``."""
    if kind == "sl":
        dec = decompose_sl(model, trace)
        return dec.terms, dec.reference
    if kind == "tok":
        dec = decompose_tok(model, trace)
        return dec.final_terms, dec.reference[-1]
    raise InvalidManifest(f"unknown decomposition {kind!r}")


def sentence_indicators(model: Model, trace: ForwardTrace, kinds: Iterable[str] = ("sl", "tok"),
                        indicators: Iterable[str] = INDICATORS,
                        sentence_id: str = "") -> Dict[Tuple[str, str, str], np.ndarray]:
    """Per-token indicator values keyed by ``(decomposition, term, indicator)``."""
    out = {}
    for kind in kinds:
        terms, ref = final_terms(model, trace, kind)
        for term in TERMS[kind]:
            for ind in indicators:
                try:
                    out[(kind, term, ind)] = indicator_rows(ind, terms[term], ref)
                except ZeroNorm as exc:
                    raise ZeroNorm(f"sentence {sentence_id}, {kind}/{term}: {exc}",
                                   sentence_id=sentence_id, position=exc.position) from None
    return out


def analyze_corpus(model: Model, corpus: Sequence[Sentence], kinds=("sl", "tok"),
                   indicators=INDICATORS, mode: str = "forced", beam: int = DEFAULT_BEAM,
                   max_len: Optional[int] = None, workers: Optional[int] = None):
    """Per-sentence indicator arrays, in corpus order."""
    if not corpus:
        raise EmptyCorpus("corpus has no sentences")
    validate_corpus(corpus, model.config)

    def one(sent):
        trace, _, _ = decode_sentence(model, sent, mode, beam, max_len)
        return sentence_indicators(model, trace, kinds, indicators, sent.id)

    return parallel_map(one, corpus, workers)


def corpus_means(per_sentence: Sequence[Dict]) -> Dict[Tuple[str, str, str], float]:
    keys = per_sentence[0].keys()
    return {k: corpus_mean(v for sent in per_sentence for v in sent[k].tolist()) for k in keys}


def sentence_means(per_sentence: Sequence[Dict], ids: Sequence[str]):
    """Mean over each sentence's tokens: ``{key: {sentence_id: value}}``."""
    keys = per_sentence[0].keys()
    return {k: {sid: corpus_mean(sent[k].tolist()) for sid, sent in zip(ids, per_sentence)}
            for k in keys}


def build_series(checkpoints: Sequence[Model], corpus: Sequence[Sentence], kind: str, term: str,
                 indicator: str, mode: str = "forced", beam: int = DEFAULT_BEAM,
                 model_id: str = "model", max_len: Optional[int] = None,
                 workers: Optional[int] = None) -> IndicatorSeries:
    """Corpus-mean indicator for each checkpoint, in order (indices 0, 1, ...)."""
    if not checkpoints:
        raise InvalidManifest("no checkpoints given")
    values = []
    for idx, model in enumerate(checkpoints):
        per_sentence = analyze_corpus(model, corpus, (kind,), (indicator,), mode, beam,
                                      max_len, workers)
        values.append((idx, corpus_means(per_sentence)[(kind, term, indicator)]))
    return IndicatorSeries(model_id, kind, term, indicator, values)
