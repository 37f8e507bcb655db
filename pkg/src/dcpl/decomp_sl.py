"""Sub-layer-wise decomposition of final decoder embeddings.

Each final embedding is split into five additive terms::

    e = i + s + t + f + c

``i`` carries the target-side input, ``t`` the self-attention outputs,
``s`` the cross-attention outputs, ``f`` the feed-forward outputs and ``c``
every bias and layer-norm offset. Each sub-layer output reaches the top of
the stack through the composition of all subsequent layer norms, which is
linear once the traced statistics are fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .activations import get_activation
from .errors import DegenerateStd, IncompleteTrace, IndexOutOfRange, WidthMismatch
from .forward import ForwardTrace
from .model import AttentionParams, Model, decoder_kind

SL_TERMS = ("i", "s", "t", "f", "c")
TOL_A = 1e-8
TOL_R = 1e-5


@dataclass(frozen=True)
class CumulativeLnMap:
    """Composed effect of layer norms ``start..Lambda`` at one position.

    Maps ``x`` to ``gain * x * scale`` where ``gain`` is the elementwise
    product of the gains and ``scale = 1 / prod(std)``.
    """

    start: int
    position: int
    scale: float
    gain: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.gain * np.asarray(x, dtype=np.float64) * self.scale


@dataclass
class VerificationReport:
    max_abs_residual: float
    max_rel_residual: float
    passed: bool
    tol_a: float
    tol_r: float

    def to_dict(self) -> dict:
        return dict(max_abs_residual=self.max_abs_residual,
                    max_rel_residual=self.max_rel_residual, passed=self.passed,
                    tol_a=self.tol_a, tol_r=self.tol_r)


@dataclass
class SlDecomposition:
    """Five ``(T, d)`` term arrays for one sentence plus the traced outputs."""

    terms: Dict[str, np.ndarray]
    reference: np.ndarray

    @property
    def reconstructed(self) -> np.ndarray:
        return sum(self.terms[name] for name in SL_TERMS)

    def verify(self, tol_a: float = TOL_A, tol_r: float = TOL_R) -> VerificationReport:
        return check_reconstruction(self.reconstructed, self.reference, tol_a, tol_r)

    def token_terms(self, t: int) -> Dict[str, np.ndarray]:
        return {name: arr[t] for name, arr in self.terms.items()}


def check_reconstruction(total: np.ndarray, reference: np.ndarray, tol_a: float = TOL_A,
                         tol_r: float = TOL_R) -> VerificationReport:
    """Componentwise ``|reference - total| <= tol_a + tol_r * |total|``."""
    total = np.asarray(total, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if total.shape != reference.shape:
        raise WidthMismatch(f"shapes {total.shape} and {reference.shape} differ")
    resid = np.abs(reference - total)
    mag = np.abs(total)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mag > 0, resid / mag, np.where(resid > 0, np.inf, 0.0))
    passed = bool(np.all(resid <= tol_a + tol_r * mag))
    return VerificationReport(float(resid.max(initial=0.0)), float(rel.max(initial=0.0)),
                              passed, tol_a, tol_r)


def verify_reconstruction(terms: Sequence[np.ndarray], reference: np.ndarray,
                          tol_a: float = TOL_A, tol_r: float = TOL_R) -> VerificationReport:
    """Check that ``terms`` sum to ``reference`` under the tolerance criterion."""
    reference = np.asarray(reference, dtype=np.float64)
    terms = [np.asarray(z, dtype=np.float64) for z in terms]
    for z in terms:
        if z.shape != reference.shape:
            raise WidthMismatch(f"term shape {z.shape} != reference shape {reference.shape}")
    total = np.zeros_like(reference)
    for z in terms:
        total = total + z
    return check_reconstruction(total, reference, tol_a, tol_r)


def _check_trace(model: Model, trace: ForwardTrace) -> None:
    Lam = model.config.num_sublayers
    if trace.num_sublayers != Lam:
        raise IncompleteTrace(f"trace has {trace.num_sublayers} sub-layers, model has {Lam}")
    for lam in range(1, Lam + 1):
        kind = decoder_kind(lam)
        if kind == "ff" and lam not in trace.ff_pre:
            raise IncompleteTrace(f"missing feed-forward pre-activation at sub-layer {lam}")
        if kind != "ff" and lam not in trace.attention:
            raise IncompleteTrace(f"missing attention weights at sub-layer {lam}")
    if np.any(trace.std <= 0):
        lam, t = np.argwhere(trace.std <= 0)[0]
        raise DegenerateStd(f"zero layer-norm std at sub-layer {lam + 1}, position {t}")


def ln_suffix(model: Model, trace: ForwardTrace):
    """Gain products and inverse std products for every start sub-layer.

    Returns ``(gain, scale)`` with ``gain[l]`` of shape ``(d,)`` and
    ``scale[l]`` of shape ``(T,)`` for start sub-layer ``l + 1``.
    """
    Lam = model.config.num_sublayers
    d = model.config.model_dim
    gain = np.empty((Lam, d))
    scale = np.empty((Lam, trace.length))
    g_run = np.ones(d)
    s_run = np.ones(trace.length)
    for lam in range(Lam, 0, -1):
        g_run = g_run * model.layer_norm(lam).g
        s_run = s_run / trace.std[lam - 1]
        gain[lam - 1] = g_run
        scale[lam - 1] = s_run
    return gain, scale


def cumulative_ln_map(model: Model, trace: ForwardTrace, sublayer: int,
                      position: int) -> CumulativeLnMap:
    Lam = model.config.num_sublayers
    if not 1 <= sublayer <= Lam:
        raise IndexOutOfRange(f"sub-layer {sublayer} outside 1..{Lam}")
    if not 0 <= position < trace.length:
        raise IndexOutOfRange(f"position {position} outside 0..{trace.length - 1}")
    stds = trace.std[sublayer - 1:, position]
    if np.any(stds <= 0):
        raise DegenerateStd(f"zero layer-norm std at position {position}")
    gain = np.ones(model.config.model_dim)
    for lam in range(sublayer, Lam + 1):
        gain = gain * model.layer_norm(lam).g
    return CumulativeLnMap(sublayer, position, float(1.0 / np.prod(stds)), gain)


def selection_matrix(h: int, model_dim: int, num_heads: int) -> np.ndarray:
    """``[0 I 0]`` block picking head ``h`` (0-based) out of a concatenation."""
    dh = model_dim // num_heads
    S = np.zeros((dh, model_dim))
    S[:, h * dh:(h + 1) * dh] = np.eye(dh)
    return S


def head_map(params: AttentionParams, h: int) -> np.ndarray:
    """Linear map from head ``h``'s output slice to the sub-layer output."""
    return params.head_map(h)


def unbiased_attention(params: AttentionParams, A: np.ndarray, attended: np.ndarray) -> np.ndarray:
    """Attention output with value and output biases removed, given weights ``A``."""
    values = np.einsum("td,hkd->htk", attended, params.W_V)
    heads = A @ values  # (H, Tq, dh)
    H, Tq, dh = heads.shape
    return heads.transpose(1, 0, 2).reshape(Tq, H * dh) @ params.W_O.T


def attention_bias(params: AttentionParams) -> np.ndarray:
    """``b_O + sum_h H_h b_V_h``: the part of attention output owed to biases."""
    return params.b_O + params.W_O @ params.b_V.reshape(-1)


def decompose_sl(model: Model, trace: ForwardTrace) -> SlDecomposition:
    _check_trace(model, trace)
    cfg = model.config
    Lam = cfg.num_sublayers
    gain, scale = ln_suffix(model, trace)

    def f_ln(lam, v):
        # v is (T, d) or (d,)
        return gain[lam - 1] * v * scale[lam - 1][:, None]

    T, d = trace.length, cfg.model_dim
    terms = {name: np.zeros((T, d)) for name in SL_TERMS}
    terms["i"] = f_ln(1, trace.x0)
    phi, _ = get_activation(cfg.activation)
    ones = np.ones((T, d))

    c = model.layer_norm(Lam).b * ones + f_ln(1, -trace.mean[0][:, None] * ones)
    for lam in range(2, Lam + 1):
        offset = model.layer_norm(lam - 1).b - trace.mean[lam - 1][:, None]
        c = c + f_ln(lam, offset)

    for lam in range(1, Lam + 1):
        kind = decoder_kind(lam)
        if kind == "ff":
            ff = model.feed_forward(lam)
            pre = trace.x[lam - 1] @ ff.W_in.T + ff.b_in
            terms["f"] = terms["f"] + f_ln(lam, phi(pre) @ ff.W_out.T)
            c = c + f_ln(lam, ff.b_out * ones)
        else:
            params = model.attention(lam)
            attended = trace.x[lam - 1] if kind == "self" else trace.memory
            out = unbiased_attention(params, trace.attention[lam], attended)
            key = "t" if kind == "self" else "s"
            terms[key] = terms[key] + f_ln(lam, out)
            c = c + f_ln(lam, attention_bias(params) * ones)
    terms["c"] = c
    return SlDecomposition(terms, trace.final.copy())
