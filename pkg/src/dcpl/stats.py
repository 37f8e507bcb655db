"""Correlations, dynamic time warping, z-normalization and permutation tests,
plus the corpus- and sentence-level correlation protocols built on them."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from .errors import (DegenerateSeries, EmptyGroup, EmptySeries, InsufficientSentences,
                     LengthMismatch, MisalignedCheckpoints, TooManyAssignments)

MAX_ASSIGNMENTS = 10**7
_MC_CHUNK = 8192


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def _paired(xs, ys) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"paired series have lengths {x.size} and {y.size}")
    if x.size < 2:
        raise DegenerateSeries("need at least two paired observations")
    return x, y


def pearson(xs, ys) -> float:
    """Product-moment correlation, computed on centered data."""
    x, y = _paired(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise DegenerateSeries("zero variance in a correlated series")
    r = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    x, y = _paired(xs, ys)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path_length: int


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> DtwResult:
    """Unconstrained dynamic time warping with absolute-difference point cost."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySeries("dtw needs two non-empty series")
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    steps = np.zeros((n + 1, m + 1), dtype=np.int64)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            # match first so equal-cost ties prefer the shortest path
            options = ((acc[i - 1, j - 1], steps[i - 1, j - 1]),
                       (acc[i - 1, j], steps[i - 1, j]),
                       (acc[i, j - 1], steps[i, j - 1]))
            best, nsteps = min(options, key=lambda o: (o[0], o[1]))
            acc[i, j] = cost[i - 1, j - 1] + best
            steps[i, j] = nsteps + 1
    return DtwResult(float(acc[n, m]), int(steps[n, m]))


def z_normalize(values: Union[Mapping[Hashable, float], Sequence[float]]):
    """Map values to ``(v - mean) / std`` with population std.

    A mapping comes back as a dict with the same keys; a sequence as an array.
    """
    if isinstance(values, Mapping):
        keys = list(values)
        arr = np.array([values[k] for k in keys], dtype=np.float64)
    else:
        keys = None
        arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < 2:
        raise DegenerateSeries("z-normalization needs at least two values")
    mean = math.fsum(arr) / arr.size
    centered = arr - mean
    std = math.sqrt(math.fsum(centered * centered) / arr.size)
    if std == 0:
        raise DegenerateSeries("z-normalization of a constant collection")
    out = centered / std
    if keys is None:
        return out
    return {k: float(v) for k, v in zip(keys, out)}


@dataclass(frozen=True)
class PermutationTestResult:
    p_value: float
    statistic: float
    mode: str
    draws: int

    def to_dict(self) -> dict:
        return dict(p_value=self.p_value, statistic=self.statistic, mode=self.mode,
                    draws=self.draws)


def _mean_gap(pooled: np.ndarray, mask: np.ndarray) -> float:
    return abs(pooled[mask].mean() - pooled[~mask].mean())


def pitman_test(group_a: Sequence[float], group_b: Sequence[float], mode: str = "exact",
                seed: int = 0, draws: int = 100_000,
                max_assignments: int = MAX_ASSIGNMENTS) -> PermutationTestResult:
    """Two-sided permutation test on the absolute difference of group means.

    ``exact`` enumerates every split of the pooled values into groups of the
    original sizes (the observed split included). ``monte_carlo`` samples
    ``draws`` random splits and reports ``(1 + hits) / (1 + draws)``.
    """
    a = np.asarray(group_a, dtype=np.float64).ravel()
    b = np.asarray(group_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyGroup("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    n, na = pooled.size, a.size
    observed = abs(a.mean() - b.mean())
    # statistics equal up to summation order count as ties
    threshold = observed - 1e-12 * max(1.0, np.abs(pooled).max())

    if mode == "exact":
        total = math.comb(n, na)
        if total > max_assignments:
            raise TooManyAssignments(f"{total} assignments exceed the cap of {max_assignments}")
        hits = 0
        mask = np.zeros(n, dtype=bool)
        for idx in itertools.combinations(range(n), na):
            mask[:] = False
            mask[list(idx)] = True
            if _mean_gap(pooled, mask) >= threshold:
                hits += 1
        return PermutationTestResult(hits / total, float(observed), "exact", total)
    if mode == "monte_carlo":
        if draws < 1:
            raise ValueError("draws must be positive")
        rng = make_rng(seed)
        hits = 0
        total_sum = pooled.sum()
        base = np.arange(n)
        done = 0
        while done < draws:
            chunk = min(_MC_CHUNK, draws - done)
            perms = rng.permuted(np.broadcast_to(base, (chunk, n)), axis=1)
            sa = pooled[perms[:, :na]].sum(axis=1)
            gaps = np.abs(sa / na - (total_sum - sa) / (n - na))
            hits += int(np.count_nonzero(gaps >= threshold))
            done += chunk
        return PermutationTestResult((1 + hits) / (1 + draws), float(observed),
                                     "monte_carlo", draws)
    raise ValueError(f"unknown mode {mode!r}")


def _series_dict(series) -> Dict[int, float]:
    if hasattr(series, "as_dict"):
        return series.as_dict()
    return dict(series)


def corpus_correlation_protocol(series, scores, seed: int = 0, num_pairs: Optional[int] = None,
                                pairing: str = "consecutive") -> float:
    """Magnitude of rank correlation between indicator and score differences.

    ``series`` maps checkpoint -> corpus-mean indicator, ``scores`` maps
    checkpoint -> corpus score (a corpus-granularity ``ScoreTable`` also
    works). Pairs ``(M_i, M_{i+1})`` of consecutive checkpoints are drawn
    without replacement; ``num_pairs=None`` or a count above the number of
    available pairs uses them all. ``pairing="random"`` draws pairs of
    distinct checkpoints instead.
    """
    ind = _series_dict(series)
    sc = scores.corpus_dict() if hasattr(scores, "corpus_dict") else dict(scores)
    ckpts = sorted(ind)
    if sorted(sc) != ckpts:
        missing = sorted(set(ckpts) ^ set(sc))
        raise MisalignedCheckpoints(f"checkpoints differ between series and scores: {missing}")
    if len(ckpts) < 2:
        raise DegenerateSeries("need at least two checkpoints")
    rng = make_rng(seed)
    if pairing == "consecutive":
        pairs = list(zip(ckpts[:-1], ckpts[1:]))
    elif pairing == "random":
        pairs = list(itertools.combinations(ckpts, 2))
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    if num_pairs is not None and num_pairs < 2:
        raise DegenerateSeries("num_pairs must be at least 2")
    if num_pairs is not None and num_pairs < len(pairs):
        chosen = rng.choice(len(pairs), size=num_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(chosen)]
    d_ind = [ind[i] - ind[j] for i, j in pairs]
    d_sc = [sc[i] - sc[j] for i, j in pairs]
    return abs(spearman(d_ind, d_sc))


def sentence_correlation_protocol(indicators: Sequence[Mapping[Tuple[int, str], float]],
                                  scores: Sequence, k: int = 3000, seed: int = 0) -> float:
    """Sentence-level variant of the correlation protocol.

    ``indicators[m]`` and ``scores[m]`` map ``(checkpoint, sentence_id)`` to a
    value for model (seed) ``m``. A subset of ``k`` sentence ids is drawn
    without replacement; for each sentence and each model, two distinct
    checkpoints are drawn and the signed differences of indicator and score
    are pooled before taking ``|spearman|``.
    """
    if len(indicators) != len(scores) or not indicators:
        raise MisalignedCheckpoints("need one score table per indicator table")
    tables = []
    common = None
    for ind, sc in zip(indicators, scores):
        sc = sc.entries if hasattr(sc, "entries") else dict(sc)
        ind = dict(ind)
        if set(ind) != set(sc):
            raise MisalignedCheckpoints("indicator and score keys differ")
        by_sent: Dict[str, List[int]] = {}
        for ckpt, sid in ind:
            by_sent.setdefault(sid, []).append(ckpt)
        for sid in by_sent:
            by_sent[sid].sort()
            if len(by_sent[sid]) < 2:
                raise MisalignedCheckpoints(f"sentence {sid} has fewer than two checkpoints")
        sids = set(by_sent)
        common = sids if common is None else common & sids
        tables.append((ind, sc, by_sent))
    common = sorted(common)
    if len(common) < k:
        raise InsufficientSentences(f"{len(common)} sentences available, {k} requested")
    rng = make_rng(seed)
    subset = [common[i] for i in sorted(rng.choice(len(common), size=k, replace=False))]
    d_ind, d_sc = [], []
    for sid in subset:
        for ind, sc, by_sent in tables:
            ck = by_sent[sid]
            i, j = rng.choice(len(ck), size=2, replace=False)
            a, b = ck[i], ck[j]
            d_ind.append(ind[(a, sid)] - ind[(b, sid)])
            d_sc.append(sc[(a, sid)] - sc[(b, sid)])
    return abs(spearman(d_ind, d_sc))


def dtw_matrix(series: Mapping[str, Sequence[float]]) -> Dict[Tuple[str, str], float]:
    """DTW distances between every unordered pair of named series."""
    names = list(series)
    return {(a, b): dtw_distance(series[a], series[b]).distance
            for a, b in itertools.combinations(names, 2)}


def z_heatmap(series: Mapping[str, Sequence[float]]) -> Dict[Tuple[str, str], float]:
    """Z-normalized pairwise DTW distances, reported for both cell orders."""
    z = z_normalize(dtw_matrix(series))
    out = {}
    for (a, b), v in z.items():
        out[(a, b)] = v
        out[(b, a)] = v
    return out
