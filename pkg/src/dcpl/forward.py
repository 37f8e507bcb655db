"""Traced forward passes: post-layer-norm encoder and decoder.

Vectors are rows: a sequence of ``T`` positions is a ``(T, d)`` array and a
weight ``W`` of shape ``(out, in)`` acts as ``X @ W.T``. Attention and
feed-forward helpers broadcast over any leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .activations import get_activation
from .errors import ShapeMismatch
from .io import validate_ids
from .model import (EOS_ID, AttentionParams, FeedForwardParams, Model, decoder_kind,
                    encoder_kind)


def positional_encoding(num_positions: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal encodings, shape ``(num_positions, dim)``."""
    pos = np.arange(num_positions, dtype=np.float64)[:, None]
    i = np.arange(dim)
    rates = 1.0 / np.power(10000.0, (2 * (i // 2)) / dim)
    angles = pos * rates[None, :]
    return np.where(i % 2 == 0, np.sin(angles), np.cos(angles))


def embed(model: Model, ids: Sequence[int]) -> np.ndarray:
    """Token embeddings plus positions: the input ``x_0`` of the first sub-layer."""
    ids = np.asarray(ids, dtype=np.int64)
    table = model.embedding
    return table[ids] + positional_encoding(ids.shape[-1], table.shape[1])


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 0.0):
    """Return ``(normalized, mean, std)`` with population std ``sqrt(var + eps)``."""
    m = x.mean(axis=-1)
    centered = x - m[..., None]
    s = np.sqrt((centered * centered).mean(axis=-1) + eps)
    return g * (centered / s[..., None]) + b, m, s


def sublayer_feed_forward(params: FeedForwardParams, x: np.ndarray, activation: str):
    """Return ``(e_dot, e_hat)``: the sub-layer output and the pre-activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.W_in.shape[1]:
        raise ShapeMismatch(
            f"feed-forward input width {x.shape[-1]} != {params.W_in.shape[1]}")
    phi, _ = get_activation(activation)
    e_hat = x @ params.W_in.T + params.b_in
    return phi(e_hat) @ params.W_out.T + params.b_out, e_hat


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def sublayer_attention(params: AttentionParams, queries: np.ndarray, attended: np.ndarray,
                       causal: bool = False):
    """Multi-head attention.

    ``queries`` is ``(..., Tq, d)`` and ``attended`` is ``(..., Tk, d)``.
    Returns ``(E_dot, A)`` with ``E_dot`` of shape ``(..., Tq, d)`` and
    attention weights ``A`` of shape ``(..., H, Tq, Tk)``. With ``causal``
    set, entries above the diagonal are exactly zero.
    """
    queries = np.asarray(queries, dtype=np.float64)
    attended = np.asarray(attended, dtype=np.float64)
    d = params.W_O.shape[0]
    if queries.shape[-1] != d or attended.shape[-1] != d:
        raise ShapeMismatch(
            f"attention inputs have widths {queries.shape[-1]}, {attended.shape[-1]}; expected {d}")
    H, dh, _ = params.W_Q.shape
    q = np.einsum("...td,hkd->...htk", queries, params.W_Q) + params.b_Q[:, None, :]
    k = np.einsum("...td,hkd->...htk", attended, params.W_K) + params.b_K[:, None, :]
    v = np.einsum("...td,hkd->...htk", attended, params.W_V) + params.b_V[:, None, :]
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(dh)
    if causal:
        tq, tk = scores.shape[-2:]
        mask = np.triu(np.ones((tq, tk), dtype=bool), k=1 + tk - tq)
        scores = np.where(mask, -np.inf, scores)
    A = softmax(scores)
    heads = A @ v  # (..., H, Tq, dh)
    concat = np.swapaxes(heads, -3, -2).reshape(heads.shape[:-3] + (heads.shape[-2], H * dh))
    return concat @ params.W_O.T + params.b_O, A


@dataclass
class ForwardTrace:
    """Record of one decoder pass over a single sentence.

    Arrays with a leading sub-layer axis are indexed by ``lambda - 1``.
    ``x[l]`` is the sub-layer input, ``e_dot`` the pre-residual output,
    ``e_ddot = e_dot + x`` the pre-layer-norm sum, ``mean``/``std`` the
    layer-norm statistics and ``e`` the post-layer-norm output.
    """

    input_ids: np.ndarray  # decoder input: EOS followed by target tokens
    src_ids: np.ndarray
    memory: np.ndarray  # (S, d)
    x: np.ndarray  # (L, T, d)
    e_dot: np.ndarray
    e_ddot: np.ndarray
    mean: np.ndarray  # (L, T)
    std: np.ndarray
    e: np.ndarray
    attention: Dict[int, np.ndarray] = field(default_factory=dict)  # lambda -> (H, T, Tk)
    ff_pre: Dict[int, np.ndarray] = field(default_factory=dict)  # lambda -> (T, ffn)
    logits: Optional[np.ndarray] = None  # (T, V)

    @property
    def num_sublayers(self) -> int:
        return self.x.shape[0]

    @property
    def length(self) -> int:
        return self.x.shape[1]

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    @property
    def final(self) -> np.ndarray:
        return self.e[-1]

    def output(self, sublayer: int) -> np.ndarray:
        """Post-layer-norm output of sub-layer ``sublayer``; 0 gives ``x_0``."""
        return self.x[0] if sublayer == 0 else self.e[sublayer - 1]


def _run_encoder(model: Model, src_ids, attention_out=None) -> np.ndarray:
    cfg = model.config
    X = embed(model, src_ids)
    for lam in range(1, cfg.encoder_sublayers + 1):
        if encoder_kind(lam) == "self":
            dot, A = sublayer_attention(model.attention(lam, "enc"), X, X)
            if attention_out is not None:
                attention_out.append(A)
        else:
            dot, _ = sublayer_feed_forward(model.feed_forward(lam, "enc"), X, cfg.activation)
        ln = model.layer_norm(lam, "enc")
        X, _, _ = layer_norm(dot + X, ln.g, ln.b, cfg.ln_epsilon)
    return X


def encode(model: Model, src_ids: Sequence[int], return_attention: bool = False):
    """Encoder memory ``X_enc`` of shape ``(len(src_ids), d)``."""
    validate_ids(src_ids, model.config, "source")
    attn = [] if return_attention else None
    memory = _run_encoder(model, src_ids, attn)
    return (memory, attn) if return_attention else memory


def _run_decoder(model: Model, memory: np.ndarray, input_ids: np.ndarray, record: bool):
    """Decoder over ``input_ids`` of shape ``(B, T)``; returns (final, trace parts)."""
    cfg = model.config
    X = embed(model, input_ids)
    parts = None
    if record:
        Lam = cfg.num_sublayers
        shape = (Lam,) + X.shape
        parts = dict(x=np.empty(shape), e_dot=np.empty(shape), e_ddot=np.empty(shape),
                     e=np.empty(shape), mean=np.empty(shape[:-1]), std=np.empty(shape[:-1]),
                     attention={}, ff_pre={})
    for lam in range(1, cfg.num_sublayers + 1):
        kind = decoder_kind(lam)
        if kind == "self":
            dot, A = sublayer_attention(model.attention(lam), X, X, causal=True)
        elif kind == "cross":
            dot, A = sublayer_attention(model.attention(lam), X, memory)
        else:
            dot, pre = sublayer_feed_forward(model.feed_forward(lam), X, cfg.activation)
        ddot = dot + X
        ln = model.layer_norm(lam)
        out, m, s = layer_norm(ddot, ln.g, ln.b, cfg.ln_epsilon)
        if record:
            i = lam - 1
            parts["x"][i], parts["e_dot"][i], parts["e_ddot"][i] = X, dot, ddot
            parts["e"][i], parts["mean"][i], parts["std"][i] = out, m, s
            if kind == "ff":
                parts["ff_pre"][lam] = pre
            else:
                parts["attention"][lam] = A
        X = out
    return X, parts


def logits_of(model: Model, final: np.ndarray) -> np.ndarray:
    """Output logits with the output projection tied to the embedding table."""
    return final @ model.embedding.T


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def decoder_input(tgt_ids: Sequence[int]) -> np.ndarray:
    return np.concatenate([[EOS_ID], np.asarray(tgt_ids, dtype=np.int64)]).astype(np.int64)


def decode_forced(model: Model, memory: np.ndarray, tgt_ids: Sequence[int],
                  src_ids: Sequence[int] = ()) -> ForwardTrace:
    """Teacher-forced decoder pass over the gold target.

    The decoder reads ``EOS, tgt_1, ..., tgt_n``, so the trace has ``n + 1``
    positions; the last one is the position that predicts end-of-sequence.
    """
    validate_ids(tgt_ids, model.config, "target", reserve=1)
    memory = np.asarray(memory, dtype=np.float64)
    if memory.ndim != 2 or memory.shape[1] != model.config.model_dim:
        raise ShapeMismatch(f"memory has shape {memory.shape}")
    ids = decoder_input(tgt_ids)
    final, parts = _run_decoder(model, memory, ids[None, :], record=True)
    squeeze = {k: v[:, 0] for k, v in parts.items() if k not in ("attention", "ff_pre")}
    return ForwardTrace(
        input_ids=ids, src_ids=np.asarray(src_ids, dtype=np.int64), memory=memory,
        attention={k: v[0] for k, v in parts["attention"].items()},
        ff_pre={k: v[0] for k, v in parts["ff_pre"].items()},
        logits=logits_of(model, final[0]), **squeeze)


def next_token_logprobs(model: Model, memory: np.ndarray, prefixes: np.ndarray) -> np.ndarray:
    """Log-probabilities of the next token for a batch of equal-length prefixes.

    ``prefixes`` has shape ``(B, T)`` and already starts with EOS.
    """
    final, _ = _run_decoder(model, memory, np.asarray(prefixes, dtype=np.int64), record=False)
    return log_softmax(logits_of(model, final[:, -1]))


def greedy_decode(model: Model, memory: np.ndarray, max_len: int):
    """Argmax decoding (ties go to the smaller token id).

    Returns ``(tokens, complete)`` where ``tokens`` excludes the final EOS.
    """
    tokens = []
    for _ in range(max_len):
        lp = next_token_logprobs(model, memory, decoder_input(tokens)[None, :])[0]
        best = int(np.argmax(lp))
        if best == EOS_ID:
            return tokens, True
        tokens.append(best)
    return tokens, False


def truncate_trace(trace: ForwardTrace, dtype=np.float32) -> ForwardTrace:
    """Round every recorded quantity to ``dtype`` and back to float64.

    Simulates a forward pass whose intermediate values were stored in lower
    precision; the decompositions then run in float64 on the rounded record.
    """
    def cut(a):
        return None if a is None else np.asarray(a).astype(dtype).astype(np.float64)

    return ForwardTrace(
        input_ids=trace.input_ids, src_ids=trace.src_ids, memory=cut(trace.memory),
        x=cut(trace.x), e_dot=cut(trace.e_dot), e_ddot=cut(trace.e_ddot),
        mean=cut(trace.mean), std=cut(trace.std), e=cut(trace.e),
        attention={k: cut(v) for k, v in trace.attention.items()},
        ff_pre={k: cut(v) for k, v in trace.ff_pre.items()}, logits=cut(trace.logits))
