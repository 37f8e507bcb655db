import numpy as np
import pytest

from dcpl.errors import (ConfigMismatch, InvalidConfig, MalformedContainer, NonFiniteTensor,
                         ShapeMismatch)
from dcpl.io import load_model, model_from_bytes, model_to_bytes, save_model
from dcpl.model import Model, ModelConfig, expected_shapes, init_random, interpolate_checkpoints


def cfg(**kw):
    base = dict(num_layers=2, model_dim=16, num_heads=4, ffn_dim=32, vocab_size=10,
                max_positions=16)
    base.update(kw)
    return ModelConfig(**base)


def test_config_invariants():
    c = cfg()
    assert c.num_sublayers == 6
    assert c.encoder_sublayers == 4
    assert c.head_dim == 4
    assert ModelConfig.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("bad", [dict(model_dim=10, num_heads=4), dict(num_layers=0),
                                 dict(ffn_dim=0), dict(activation="tanh"),
                                 dict(ln_epsilon=-1.0)])
def test_config_rejects(bad):
    with pytest.raises(InvalidConfig):
        cfg(**bad)


def test_init_is_deterministic_and_seed_sensitive():
    assert init_random(cfg(), 7) == init_random(cfg(), 7)
    assert init_random(cfg(), 1) != init_random(cfg(), 2)


def test_init_ranges():
    c = cfg()
    m = init_random(c, 0)
    bound = 1 / np.sqrt(c.model_dim)
    for name, arr in m.tensors.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            assert np.all(arr == 1)
        elif leaf == "b" or leaf.startswith("b_"):
            assert np.all(arr == 0)
        else:
            assert np.all(np.abs(arr) <= bound)
        assert arr.dtype == np.float64


def test_shapes_follow_config():
    c = cfg()
    shapes = expected_shapes(c)
    assert shapes["dec.sl1.ma.h1.W_Q"] == (4, 16)
    assert shapes["dec.sl3.ff.W_in"] == (32, 16)
    assert shapes["dec.sl2.ma.W_O"] == (16, 16)
    assert shapes["emb"] == (10, 16)
    # encoder has no cross-attention: sub-layer 2 is feed-forward
    assert "enc.sl2.ff.W_out" in shapes and "enc.sl2.ma.W_O" not in shapes


def test_round_trip(tmp_path):
    m = init_random(cfg(), 7, bias_scale=0.3, gain_scale=0.2)
    save_model(m, tmp_path / "m.dcpl")
    assert load_model(tmp_path / "m.dcpl") == m


def _tamper(model, name, fn):
    tensors = dict(model.tensors)
    tensors[name] = fn(np.array(tensors[name]))
    return tensors


def test_load_rejects_truncated_tensor():
    m = init_random(cfg(), 7)
    with pytest.raises(ShapeMismatch, match="dec.sl1.ma.W_O"):
        Model(m.config, _tamper(m, "dec.sl1.ma.W_O", lambda a: a[:-1]))


def test_load_rejects_nan():
    m = init_random(cfg(), 7)

    def poison(a):
        a[3] = np.nan
        return a

    with pytest.raises(NonFiniteTensor):
        Model(m.config, _tamper(m, "dec.sl3.ln.g", poison))


def test_container_rejects_bad_magic_and_version():
    raw = bytearray(model_to_bytes(init_random(cfg(), 0)))
    bad = bytes(b"XXXX" + raw[4:])
    with pytest.raises(MalformedContainer):
        model_from_bytes(bad)
    raw[4] = 99
    with pytest.raises(MalformedContainer):
        model_from_bytes(bytes(raw))
    with pytest.raises(MalformedContainer):
        model_from_bytes(bytes(raw[:10]))


def test_container_payload_truncated():
    raw = model_to_bytes(init_random(cfg(), 0))
    with pytest.raises((MalformedContainer, ShapeMismatch)):
        model_from_bytes(raw[:-8])


def test_interpolation_endpoints_and_midpoint():
    a, b = init_random(cfg(), 1), init_random(cfg(), 2)
    pair = interpolate_checkpoints(a, b, 2)
    assert pair[0] == a and pair[1] == b
    zeros = a.map_tensors(lambda k, v: np.zeros_like(v))
    ones = a.map_tensors(lambda k, v: np.ones_like(v))
    mid = interpolate_checkpoints(zeros, ones, 3)[1]
    assert all(np.all(v == 0.5) for v in mid.tensors.values())
    same = interpolate_checkpoints(a, a, 5)
    assert len(same) == 5 and all(m == a for m in same)


def test_interpolation_rejects_mismatch():
    with pytest.raises(ConfigMismatch):
        interpolate_checkpoints(init_random(cfg(), 1), init_random(cfg(model_dim=8), 1), 3)
