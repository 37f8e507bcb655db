"""Quality scores: score tables, corpus BLEU and sentence chrF on token ids.

These metrics run on integer token ids (BLEU) or on the ids rendered as
digit strings (chrF). They are not comparable to published detokenized
scores; they only drive the correlation protocols.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import DuplicateKey, EmptyCorpus, EmptyInput, LengthMismatch, MalformedRow
from .io import atomic_write_bytes

CORPUS_KEY = "*"
SCORE_HEADER = ("checkpoint", "sentence_id", "score")


@dataclass
class ScoreTable:
    granularity: str  # "corpus" or "sentence"
    entries: Dict[Tuple[int, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.granularity not in ("corpus", "sentence"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        for ckpt, sid in self.entries:
            if (sid == CORPUS_KEY) != (self.granularity == "corpus"):
                raise MalformedRow(
                    f"key ({ckpt}, {sid!r}) does not fit {self.granularity} granularity")

    @property
    def checkpoints(self) -> List[int]:
        return sorted({c for c, _ in self.entries})

    def corpus_dict(self) -> Dict[int, float]:
        if self.granularity != "corpus":
            raise MalformedRow("sentence-level table has no corpus scores")
        return {c: v for (c, _), v in self.entries.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SCORE_HEADER)
        for (ckpt, sid), score in sorted(self.entries.items()):
            writer.writerow([ckpt, sid, format(score, ".17g")])
        return buf.getvalue()


def parse_scores(text: str, source: str = "<scores>") -> ScoreTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != SCORE_HEADER:
        raise MalformedRow(f"{source}: expected header {','.join(SCORE_HEADER)}")
    entries: Dict[Tuple[int, str], float] = {}
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != 3:
            raise MalformedRow(f"{source}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            ckpt = int(row[0])
            score = float(row[2])
        except ValueError:
            raise MalformedRow(f"{source}:{lineno}: non-numeric field in {row}") from None
        if not math.isfinite(score):
            raise MalformedRow(f"{source}:{lineno}: non-finite score")
        key = (ckpt, row[1].strip())
        if key in entries:
            raise DuplicateKey(f"{source}:{lineno}: duplicate key {key}")
        entries[key] = score
    if not entries:
        raise MalformedRow(f"{source}: no score rows")
    kinds = {sid == CORPUS_KEY for _, sid in entries}
    if len(kinds) > 1:
        raise MalformedRow(f"{source}: mixes corpus ('*') and sentence rows")
    return ScoreTable("corpus" if kinds == {True} else "sentence", entries)


def load_scores(path) -> ScoreTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_scores(fh.read(), str(path))


def save_scores(table: ScoreTable, path) -> None:
    atomic_write_bytes(path, table.to_csv().encode("utf-8"))


def _ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu_corpus(hypotheses: Sequence[Sequence[int]], references: Sequence[Sequence[int]],
                max_order: int = 4, smooth: bool = False) -> float:
    """Corpus BLEU on token sequences, in percent.

    Clipped n-gram counts are pooled over the corpus. Without smoothing the
    score is 0 as soon as one precision is 0; ``smooth`` adds one to the
    numerator and denominator of every order above 1. Orders for which the
    hypotheses contain no n-gram at all are left out of the geometric mean.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpus("no sentences to score")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum((h & r).values())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    # orders longer than every hypothesis carry no evidence and are skipped
    orders = [n for n in range(max_order) if totals[n] > 0]
    log_p = 0.0
    for n in orders:
        num, den = matches[n], totals[n]
        if smooth and n > 0:
            num, den = num + 1, den + 1
        if num == 0:
            return 0.0
        log_p += math.log(num / den)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p / len(orders))


def _symbols(x) -> Sequence:
    if isinstance(x, str):
        return "".join(x.split())
    return list(x)


def chrf_sentence(hypothesis, reference, n: int = 6, beta: float = 2.0) -> float:
    """chrF in percent over symbol n-grams of orders ``1..n``.

    Strings are compared character by character with whitespace removed;
    other sequences element by element. Precision and recall are averaged
    over the orders for which both sides have at least one n-gram.
    """
    if n < 1 or beta <= 0:
        raise ValueError("need n >= 1 and beta > 0")
    hyp, ref = _symbols(hypothesis), _symbols(reference)
    if len(hyp) == 0 or len(ref) == 0:
        raise EmptyInput("chrF needs non-empty hypothesis and reference")
    prec = rec = 0.0
    orders = 0
    for k in range(1, n + 1):
        h, r = _ngrams(hyp, k), _ngrams(ref, k)
        nh, nr = sum(h.values()), sum(r.values())
        if nh == 0 or nr == 0:
            continue
        common = sum((h & r).values())
        prec += common / nh
        rec += common / nr
        orders += 1
    prec /= orders
    rec /= orders
    if prec + rec == 0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1 + b2) * prec * rec / (b2 * prec + rec)


def render_ids(ids: Iterable[int]) -> str:
    """Token ids as a space-separated digit string, the symbol stream for chrF."""
    return " ".join(str(int(t)) for t in ids)
