"""Token-wise decomposition by recurrence over decoder sub-layers.

At every sub-layer the hidden state is kept as ``s + t + c``: the part that
originates in the encoder memory, the part that originates in the target-side
input, and the part owed to biases and layer-norm offsets. Feed-forward
sub-layers are handled through the activation's tangent at the traced
pre-activation, which is exact at that point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .activations import get_activation
from .decomp_sl import (TOL_A, TOL_R, VerificationReport, _check_trace, attention_bias,
                        check_reconstruction, unbiased_attention)
from .errors import IndexOutOfRange, WrongSublayerKind
from .forward import ForwardTrace
from .model import AttentionParams, FeedForwardParams, Model, decoder_kind

TOK_TERMS = ("s", "t", "c")


@dataclass(frozen=True)
class LocalLinearization:
    """Tangent of the activation at ``point``: ``phi(point) = diag * point + intercept``."""

    diag: np.ndarray
    intercept: np.ndarray
    point: np.ndarray


def linearize(activation: str, pre: np.ndarray, strict: bool = False) -> LocalLinearization:
    phi, phi_prime = get_activation(activation)
    pre = np.asarray(pre, dtype=np.float64)
    diag = phi_prime(pre, strict=strict)
    return LocalLinearization(diag, phi(pre) - diag * pre, pre)


def ffn_local_linearization(model: Model, sublayer: int, e_input: np.ndarray,
                            strict: bool = False) -> LocalLinearization:
    """Linearize the feed-forward of ``sublayer`` around input ``e_input``."""
    Lam = model.config.num_sublayers
    if not 1 <= sublayer <= Lam:
        raise IndexOutOfRange(f"sub-layer {sublayer} outside 1..{Lam}")
    if decoder_kind(sublayer) != "ff":
        raise WrongSublayerKind(f"sub-layer {sublayer} is not a feed-forward sub-layer")
    ff = model.feed_forward(sublayer)
    pre = np.asarray(e_input, dtype=np.float64) @ ff.W_in.T + ff.b_in
    return linearize(model.config.activation, pre, strict)


def linearized_ff_apply(ff: FeedForwardParams, diag: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``W_out diag(L) W_in z`` for rows of ``z``."""
    return (diag * (z @ ff.W_in.T)) @ ff.W_out.T


def route_self_attention(params: AttentionParams, A: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Push a per-position term through fixed attention weights, summed over heads."""
    return unbiased_attention(params, A, z)


@dataclass
class TokDecomposition:
    """Terms for every sub-layer ``0..Lambda``: ``terms[name][lam]`` is ``(T, d)``."""

    terms: Dict[str, np.ndarray]
    reference: np.ndarray  # (Lambda + 1, T, d); index 0 is x_0

    @property
    def num_sublayers(self) -> int:
        return self.reference.shape[0] - 1

    def at(self, sublayer: int) -> Dict[str, np.ndarray]:
        return {name: arr[sublayer] for name, arr in self.terms.items()}

    @property
    def final_terms(self) -> Dict[str, np.ndarray]:
        return self.at(self.num_sublayers)

    def reconstructed(self, sublayer: int) -> np.ndarray:
        return sum(self.terms[name][sublayer] for name in TOK_TERMS)

    def verify(self, sublayer: int = None, tol_a: float = TOL_A,
               tol_r: float = TOL_R) -> VerificationReport:
        """Check one sub-layer, or every sub-layer ``1..Lambda`` when omitted."""
        if sublayer is not None:
            return check_reconstruction(self.reconstructed(sublayer), self.reference[sublayer],
                                        tol_a, tol_r)
        total = sum(self.terms[name][1:] for name in TOK_TERMS)
        return check_reconstruction(total, self.reference[1:], tol_a, tol_r)


def decompose_tok(model: Model, trace: ForwardTrace, strict: bool = False) -> TokDecomposition:
    _check_trace(model, trace)
    cfg = model.config
    Lam = cfg.num_sublayers
    T, d = trace.length, cfg.model_dim
    out = {name: np.empty((Lam + 1, T, d)) for name in TOK_TERMS}
    s = np.zeros((T, d))
    t = trace.x0.copy()
    c = np.zeros((T, d))
    out["s"][0], out["t"][0], out["c"][0] = s, t, c

    for lam in range(1, Lam + 1):
        kind = decoder_kind(lam)
        if kind == "self":
            params = model.attention(lam)
            A = trace.attention[lam]
            s_dot = route_self_attention(params, A, s)
            t_dot = route_self_attention(params, A, t)
            c_dot = attention_bias(params) + route_self_attention(params, A, c)
        elif kind == "cross":
            params = model.attention(lam)
            s_dot = unbiased_attention(params, trace.attention[lam], trace.memory)
            t_dot = np.zeros((T, d))
            c_dot = np.broadcast_to(attention_bias(params), (T, d))
        else:
            ff = model.feed_forward(lam)
            lin = linearize(cfg.activation, trace.ff_pre[lam], strict)
            s_dot = linearized_ff_apply(ff, lin.diag, s)
            t_dot = linearized_ff_apply(ff, lin.diag, t)
            c_dot = (ff.b_out + lin.intercept @ ff.W_out.T
                     + (lin.diag * ff.b_in) @ ff.W_out.T
                     + linearized_ff_apply(ff, lin.diag, c))
        ln = model.layer_norm(lam)
        inv = (1.0 / trace.std[lam - 1])[:, None]
        s = ln.g * (s_dot + s) * inv
        t = ln.g * (t_dot + t) * inv
        c = ln.g * (c_dot + c - trace.mean[lam - 1][:, None]) * inv + ln.b
        out["s"][lam], out["t"][lam], out["c"][lam] = s, t, c

    reference = np.concatenate([trace.x0[None], trace.e], axis=0)
    return TokDecomposition(out, reference)
