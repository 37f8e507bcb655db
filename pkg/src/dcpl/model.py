"""Encoder-decoder Transformer configuration, weights and checkpoint helpers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .activations import ACTIVATIONS
from .errors import ConfigMismatch, InvalidConfig, NonFiniteTensor, ShapeMismatch

EOS_ID = 0


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of a toy encoder-decoder Transformer.

    ``num_layers`` counts decoder layers (three sub-layers each: self-attention,
    cross-attention, feed-forward). The encoder has ``encoder_layers`` layers of
    two sub-layers each and defaults to the decoder depth. Token id 0 is the
    end-of-sequence symbol; it also starts every decoder input.
    """

    num_layers: int = 6
    model_dim: int = 512
    num_heads: int = 8
    ffn_dim: int = 2048
    vocab_size: int = 32000
    activation: str = "swish"
    ln_epsilon: float = 0.0
    max_positions: int = 256
    encoder_layers: Optional[int] = None

    def __post_init__(self):
        if self.encoder_layers is None:
            object.__setattr__(self, "encoder_layers", self.num_layers)
        for name in ("num_layers", "model_dim", "num_heads", "ffn_dim",
                     "vocab_size", "max_positions", "encoder_layers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value <= 0:
                raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")
        if self.model_dim % self.num_heads != 0:
            raise InvalidConfig(
                f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        if not np.isfinite(self.ln_epsilon) or self.ln_epsilon < 0:
            raise InvalidConfig(f"ln_epsilon must be non-negative, got {self.ln_epsilon!r}")

    @property
    def num_sublayers(self) -> int:
        return 3 * self.num_layers

    @property
    def encoder_sublayers(self) -> int:
        return 2 * self.encoder_layers

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None


def decoder_kind(sublayer: int) -> str:
    """Kind of decoder sub-layer ``sublayer`` (1-based)."""
    return {1: "self", 2: "cross", 0: "ff"}[sublayer % 3]


def encoder_kind(sublayer: int) -> str:
    return "self" if sublayer % 2 == 1 else "ff"


def _attention_shapes(prefix: str, cfg: ModelConfig) -> Iterator[Tuple[str, Tuple[int, ...]]]:
    d, dh = cfg.model_dim, cfg.head_dim
    for h in range(1, cfg.num_heads + 1):
        for proj in ("Q", "K", "V"):
            yield f"{prefix}.ma.h{h}.W_{proj}", (dh, d)
            yield f"{prefix}.ma.h{h}.b_{proj}", (dh,)
    yield f"{prefix}.ma.W_O", (d, d)
    yield f"{prefix}.ma.b_O", (d,)


def _ff_shapes(prefix: str, cfg: ModelConfig) -> Iterator[Tuple[str, Tuple[int, ...]]]:
    d, f = cfg.model_dim, cfg.ffn_dim
    yield f"{prefix}.ff.W_in", (f, d)
    yield f"{prefix}.ff.b_in", (f,)
    yield f"{prefix}.ff.W_out", (d, f)
    yield f"{prefix}.ff.b_out", (d,)


def _ln_shapes(prefix: str, cfg: ModelConfig) -> Iterator[Tuple[str, Tuple[int, ...]]]:
    yield f"{prefix}.ln.g", (cfg.model_dim,)
    yield f"{prefix}.ln.b", (cfg.model_dim,)


def expected_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Canonical tensor names and shapes, in container order."""
    shapes: Dict[str, Tuple[int, ...]] = {"emb": (cfg.vocab_size, cfg.model_dim)}
    for side, count, kind_of in (("enc", cfg.encoder_sublayers, encoder_kind),
                                 ("dec", cfg.num_sublayers, decoder_kind)):
        for lam in range(1, count + 1):
            prefix = f"{side}.sl{lam}"
            body = _ff_shapes if kind_of(lam) == "ff" else _attention_shapes
            shapes.update(body(prefix, cfg))
            shapes.update(_ln_shapes(prefix, cfg))
    return shapes


@dataclass(frozen=True)
class AttentionParams:
    """Per-sub-layer attention weights with heads stacked on axis 0."""

    W_Q: np.ndarray  # (H, d/H, d)
    b_Q: np.ndarray  # (H, d/H)
    W_K: np.ndarray
    b_K: np.ndarray
    W_V: np.ndarray
    b_V: np.ndarray
    W_O: np.ndarray  # (d, d)
    b_O: np.ndarray  # (d,)

    @property
    def num_heads(self) -> int:
        return self.W_Q.shape[0]

    def head_map(self, h: int) -> np.ndarray:
        """Columns of the output projection fed by head ``h`` (0-based)."""
        dh = self.W_Q.shape[1]
        return self.W_O[:, h * dh:(h + 1) * dh]


@dataclass(frozen=True)
class FeedForwardParams:
    W_in: np.ndarray  # (ffn, d)
    b_in: np.ndarray
    W_out: np.ndarray  # (d, ffn)
    b_out: np.ndarray


@dataclass(frozen=True)
class LayerNormParams:
    g: np.ndarray
    b: np.ndarray


class Model:
    """Immutable configuration plus named float64 weight tensors."""

    def __init__(self, config: ModelConfig, tensors: Dict[str, np.ndarray]):
        shapes = expected_shapes(config)
        missing = [name for name in shapes if name not in tensors]
        if missing:
            raise ShapeMismatch(f"missing tensor {missing[0]!r}")
        extra = [name for name in tensors if name not in shapes]
        if extra:
            raise ShapeMismatch(f"unexpected tensor {extra[0]!r}")
        frozen = {}
        for name, shape in shapes.items():
            arr = np.array(tensors[name], dtype=np.float64, copy=True)
            if arr.shape != shape:
                raise ShapeMismatch(
                    f"tensor {name!r} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteTensor(f"tensor {name!r} contains NaN or Inf")
            arr.setflags(write=False)
            frozen[name] = arr
        self.config = config
        self.tensors = frozen
        self._cache: dict = {}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)

    def __repr__(self):
        return f"Model({self.config!r})"

    @property
    def embedding(self) -> np.ndarray:
        return self.tensors["emb"]

    def attention(self, sublayer: int, side: str = "dec") -> AttentionParams:
        key = ("ma", side, sublayer)
        if key not in self._cache:
            p = f"{side}.sl{sublayer}.ma"
            H = self.config.num_heads

            def stack(name):
                return np.stack([self.tensors[f"{p}.h{h}.{name}"] for h in range(1, H + 1)])

            self._cache[key] = AttentionParams(
                W_Q=stack("W_Q"), b_Q=stack("b_Q"), W_K=stack("W_K"), b_K=stack("b_K"),
                W_V=stack("W_V"), b_V=stack("b_V"),
                W_O=self.tensors[f"{p}.W_O"], b_O=self.tensors[f"{p}.b_O"])
        return self._cache[key]

    def feed_forward(self, sublayer: int, side: str = "dec") -> FeedForwardParams:
        p = f"{side}.sl{sublayer}.ff"
        return FeedForwardParams(self.tensors[f"{p}.W_in"], self.tensors[f"{p}.b_in"],
                                 self.tensors[f"{p}.W_out"], self.tensors[f"{p}.b_out"])

    def layer_norm(self, sublayer: int, side: str = "dec") -> LayerNormParams:
        p = f"{side}.sl{sublayer}.ln"
        return LayerNormParams(self.tensors[f"{p}.g"], self.tensors[f"{p}.b"])

    def replace(self, **updates: np.ndarray) -> "Model":
        """Copy of the model with some tensors swapped out (keys are tensor names)."""
        tensors = dict(self.tensors)
        tensors.update(updates)
        return Model(self.config, tensors)

    def map_tensors(self, fn) -> "Model":
        return Model(self.config, {k: fn(k, v) for k, v in self.tensors.items()})


def _is_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("b_") or leaf == "b"


def _is_gain(name: str) -> bool:
    return name.endswith(".ln.g")


def init_random(config: ModelConfig, seed: int, *, bias_scale: float = 0.0,
                gain_scale: float = 0.0) -> Model:
    """Draw a model deterministically from ``seed``.

    Weight matrices and the embedding table are uniform in
    ``[-1/sqrt(d), 1/sqrt(d)]``; gains are 1 and biases 0. Non-zero
    ``bias_scale``/``gain_scale`` draw biases uniform in ``[-bias_scale,
    bias_scale]`` and gains uniform in ``[1 - gain_scale, 1 + gain_scale]``,
    which exercises bias bookkeeping in the decompositions.
    """
    if not isinstance(config, ModelConfig):
        raise InvalidConfig("config must be a ModelConfig")
    rng = np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))
    bound = 1.0 / np.sqrt(config.model_dim)
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if _is_gain(name):
            arr = np.ones(shape)
            if gain_scale:
                arr += rng.uniform(-gain_scale, gain_scale, size=shape)
        elif _is_bias(name):
            arr = np.zeros(shape)
            if bias_scale:
                arr += rng.uniform(-bias_scale, bias_scale, size=shape)
        else:
            arr = rng.uniform(-bound, bound, size=shape)
        tensors[name] = arr
    return Model(config, tensors)


def interpolate_checkpoints(model_a: Model, model_b: Model, n: int) -> List[Model]:
    """``n`` models on the straight line from ``model_a`` to ``model_b``.

    Endpoints are returned bit-identical to the inputs.
    """
    if n < 1:
        raise InvalidConfig("n must be a positive integer")
    if model_a.config != model_b.config:
        raise ConfigMismatch("cannot interpolate models with different configs")
    if n == 1:
        return [model_a]
    out = []
    for k in range(n):
        if k == 0:
            out.append(model_a)
        elif k == n - 1:
            out.append(model_b)
        else:
            alpha = k / (n - 1)
            out.append(model_a.map_tensors(
                lambda name, a: (1.0 - alpha) * a + alpha * model_b.tensors[name]))
    return out
