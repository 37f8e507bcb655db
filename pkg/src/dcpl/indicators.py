"""Scalar indicators over decomposition terms and their corpus aggregates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import EmptyCorpus, MisalignedCheckpoints, ZeroNorm

INDICATORS = ("nr", "cos", "mu")


def _as_vec(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def norm_ratio(z, e) -> float:
    """``||z|| / ||e||``."""
    ne = np.linalg.norm(_as_vec(e))
    if ne == 0:
        raise ZeroNorm("norm ratio undefined for a zero reference vector")
    return float(np.linalg.norm(_as_vec(z)) / ne)


def cosine(z, e) -> float:
    z, e = _as_vec(z), _as_vec(e)
    nz, ne = np.linalg.norm(z), np.linalg.norm(e)
    if nz == 0 or ne == 0:
        raise ZeroNorm("cosine undefined for a zero vector")
    return float(min(1.0, max(-1.0, np.dot(z, e) / (nz * ne))))


def importance_mu(z, e) -> float:
    """Signed projection weight ``z.e / ||e||^2``; equals ``cosine * norm_ratio``."""
    z, e = _as_vec(z), _as_vec(e)
    ee = np.dot(e, e)
    if ee == 0:
        raise ZeroNorm("importance undefined for a zero reference vector")
    return float(np.dot(z, e) / ee)


INDICATOR_FUNCS: Dict[str, Callable] = {"nr": norm_ratio, "cos": cosine, "mu": importance_mu}


def indicator_rows(indicator: str, Z: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Indicator for each row pair of ``Z`` and ``E`` (both ``(T, d)``).

    Vectorized equivalent of calling the scalar function row by row; raises
    ``ZeroNorm`` with the offending position.
    """
    Z = np.asarray(Z, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    ne = np.linalg.norm(E, axis=-1)
    bad = np.flatnonzero(ne == 0)
    if indicator == "cos":
        bad = np.union1d(bad, np.flatnonzero(np.linalg.norm(Z, axis=-1) == 0))
    if bad.size:
        raise ZeroNorm(f"{indicator} undefined at position {int(bad[0])}",
                       position=int(bad[0]))
    if indicator == "nr":
        return np.linalg.norm(Z, axis=-1) / ne
    dots = np.einsum("td,td->t", Z, E)
    if indicator == "mu":
        return dots / np.einsum("td,td->t", E, E)
    if indicator == "cos":
        return np.clip(dots / (np.linalg.norm(Z, axis=-1) * ne), -1.0, 1.0)
    raise ValueError(f"unknown indicator {indicator!r}")


def corpus_mean(values: Iterable[float]) -> float:
    """Unweighted mean with exactly rounded summation (order independent)."""
    values = list(values)
    if not values:
        raise EmptyCorpus("no tokens to average")
    return math.fsum(values) / len(values)


def corpus_mean_indicator(decompositions: Sequence[Tuple[str, Mapping[str, np.ndarray], np.ndarray]],
                          term: str, indicator: str) -> float:
    """Token-level mean of an indicator over a corpus.

    ``decompositions`` holds ``(sentence_id, terms, reference)`` triples with
    ``terms[term]`` and ``reference`` of shape ``(T, d)``.
    """
    values: List[float] = []
    for sid, terms, reference in decompositions:
        try:
            values.extend(indicator_rows(indicator, terms[term], reference).tolist())
        except ZeroNorm as exc:
            raise ZeroNorm(f"sentence {sid}: {exc}", sentence_id=sid,
                           position=exc.position) from None
    return corpus_mean(values)


@dataclass
class IndicatorSeries:
    model_id: str
    decomposition: str
    term: str
    indicator: str
    values: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        idx = [c for c, _ in self.values]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise MisalignedCheckpoints("checkpoint indices must be strictly increasing")

    @property
    def checkpoints(self) -> List[int]:
        return [c for c, _ in self.values]

    @property
    def array(self) -> np.ndarray:
        return np.array([v for _, v in self.values], dtype=np.float64)

    def as_dict(self) -> Dict[int, float]:
        return dict(self.values)
