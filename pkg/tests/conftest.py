import numpy as np
import pytest

from dcpl.forward import decode_forced, encode
from dcpl.io import random_corpus
from dcpl.model import ModelConfig, init_random


def toy_config(seed: int, **over) -> ModelConfig:
    """Small config drawn from the sweep grid (L in 1..3, d in 8/16/32, H in 2/4)."""
    rng = np.random.default_rng(seed)
    kw = dict(num_layers=int(rng.integers(1, 4)), model_dim=int(rng.choice([8, 16, 32])),
              num_heads=int(rng.choice([2, 4])), ffn_dim=int(rng.choice([16, 32])),
              vocab_size=int(rng.integers(8, 24)),
              activation=str(rng.choice(["relu", "gelu", "swish"])), max_positions=24)
    kw.update(over)
    return ModelConfig(**kw)


def toy_model(seed: int, bias_scale=0.5, gain_scale=0.5, **over):
    return init_random(toy_config(seed, **over), seed, bias_scale=bias_scale,
                       gain_scale=gain_scale)


def forced_trace(model, sent):
    return decode_forced(model, encode(model, sent.src_ids), sent.tgt_ids, sent.src_ids)


@pytest.fixture(scope="session")
def small_model():
    return toy_model(3, num_layers=2, model_dim=16, num_heads=4, ffn_dim=32, vocab_size=12,
                     activation="swish")


@pytest.fixture(scope="session")
def small_corpus(small_model):
    return random_corpus(small_model.config, 6, seed=5, max_len=8)


@pytest.fixture(scope="session")
def small_trace(small_model, small_corpus):
    return forced_trace(small_model, small_corpus[0])
