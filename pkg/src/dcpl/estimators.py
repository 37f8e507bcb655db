"""scikit-learn style wrappers around the decompositions and indicators.

``EmbeddingDecomposer`` turns a corpus into a stack of per-token term
vectors; ``IndicatorTransformer`` reduces such a stack to scalar indicators.
Both follow the usual fit/transform contract so they compose in a Pipeline.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decomp_sl import TOL_A, TOL_R
from .errors import EmptyCorpus, InvalidManifest, ReconstructionError
from .indicators import INDICATORS, indicator_rows
from .io import Sentence, validate_corpus
from .model import Model
from .pipeline import DEFAULT_BEAM, TERMS, decode_sentence, final_terms, parallel_map


def check_corpus(X) -> list:
    """Coerce ``X`` into a list of ``Sentence``.

    Accepts sentences, mappings with ``id``/``src_ids``/``tgt_ids`` keys or
    ``(id, src_ids, tgt_ids)`` triples.
    """
    if X is None:
        raise EmptyCorpus("corpus is None")
    out = []
    for item in X:
        if isinstance(item, Sentence):
            out.append(item)
        elif isinstance(item, dict):
            out.append(Sentence(str(item["id"]), tuple(item["src_ids"]), tuple(item["tgt_ids"])))
        else:
            sid, src, tgt = item
            out.append(Sentence(str(sid), tuple(src), tuple(tgt)))
    if not out:
        raise EmptyCorpus("corpus has no sentences")
    return out


def check_model(model) -> Model:
    if not isinstance(model, Model):
        raise InvalidManifest(f"expected a Model, got {type(model).__name__}")
    return model


class EmbeddingDecomposer(TransformerMixin, BaseEstimator):
    """Decompose the final decoder embeddings of a corpus.

    ``transform`` returns an array of shape ``(n_tokens, n_terms, d)`` with
    tokens in corpus order and terms in ``terms_`` order. With ``verify``
    set, every sentence is checked against the reconstruction tolerance and
    a violation raises ``ReconstructionError``.
    """

    def __init__(self, model: Optional[Model] = None, decomposition: str = "sl",
                 mode: str = "forced", beam: int = DEFAULT_BEAM, max_len: Optional[int] = None,
                 verify: bool = True, tol_a: float = TOL_A, tol_r: float = TOL_R,
                 n_jobs: Optional[int] = None):
        self.model = model
        self.decomposition = decomposition
        self.mode = mode
        self.beam = beam
        self.max_len = max_len
        self.verify = verify
        self.tol_a = tol_a
        self.tol_r = tol_r
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        check_model(self.model)
        if self.decomposition not in TERMS:
            raise InvalidManifest(f"unknown decomposition {self.decomposition!r}")
        if self.mode not in ("forced", "beam"):
            raise InvalidManifest(f"unknown decoding mode {self.mode!r}")
        if self.beam < 1 or not (self.tol_a > 0 and self.tol_r > 0):
            raise InvalidManifest("beam must be >= 1 and tolerances positive")
        self.terms_ = TERMS[self.decomposition]
        self.n_features_out_ = self.model.config.model_dim
        return self

    def _one(self, sent):
        trace, _, _ = decode_sentence(self.model, sent, self.mode, self.beam, self.max_len)
        terms, ref = final_terms(self.model, trace, self.decomposition)
        stack = np.stack([terms[name] for name in self.terms_], axis=1)
        return stack, ref

    def transform_with_reference(self, X):
        """Like ``transform`` but also returns the traced embeddings ``(n_tokens, d)``."""
        check_is_fitted(self, "terms_")
        corpus = check_corpus(X)
        validate_corpus(corpus, self.model.config)
        results = parallel_map(self._one, corpus, self.n_jobs)
        stacks = np.concatenate([s for s, _ in results], axis=0)
        refs = np.concatenate([r for _, r in results], axis=0)
        if self.verify:
            total = stacks.sum(axis=1)
            bad = np.abs(refs - total) > self.tol_a + self.tol_r * np.abs(total)
            if bad.any():
                raise ReconstructionError(
                    f"{int(bad.any(axis=1).sum())} tokens violate the tolerance criterion")
        return stacks, refs

    def transform(self, X):
        return self.transform_with_reference(X)[0]


class IndicatorTransformer(TransformerMixin, BaseEstimator):
    """Map a term stack ``(n, k, d)`` to indicator values ``(n, k)``.

    The reference vector of each token is the sum of its terms, which equals
    the traced embedding up to the reconstruction tolerance.
    """

    def __init__(self, indicator: str = "cos"):
        self.indicator = indicator

    def fit(self, X=None, y=None):
        if self.indicator not in INDICATORS:
            raise InvalidManifest(f"unknown indicator {self.indicator!r}")
        if X is not None:
            self.n_terms_ = self._check(X).shape[1]
        return self

    @staticmethod
    def _check(X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise InvalidManifest(f"expected a (tokens, terms, dim) array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidManifest("non-finite values in term stack")
        return X

    def transform(self, X):
        if self.indicator not in INDICATORS:
            raise InvalidManifest(f"unknown indicator {self.indicator!r}")
        X = self._check(X)
        ref = X.sum(axis=1)
        return np.stack([indicator_rows(self.indicator, X[:, j], ref)
                         for j in range(X.shape[1])], axis=1)
