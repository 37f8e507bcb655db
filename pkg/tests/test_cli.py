import json
import struct

import numpy as np
import pytest

from dcpl.cli import run
from dcpl.io import model_to_bytes, random_corpus, write_corpus
from dcpl.model import ModelConfig, init_random

CFG = ModelConfig(num_layers=1, model_dim=8, num_heads=2, ffn_dim=16, vocab_size=10,
                  max_positions=24)


@pytest.fixture()
def files(tmp_path):
    model = init_random(CFG, 3, bias_scale=0.5, gain_scale=0.5)
    (tmp_path / "m.dcpl").write_bytes(model_to_bytes(model))
    write_corpus(random_corpus(CFG, 3, seed=1, max_len=5), tmp_path / "c.jsonl")
    return tmp_path


def cli(*argv):
    return run([str(a) for a in argv])


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_verify_sl_passes(files):
    out = files / "report.json"
    assert cli("verify", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--decomp", "sl", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["sl"]["max_abs_residual"] < 1e-8
    assert "tok" not in rep


def test_verify_checks_both_and_fails_with_exit_2(files, capsys):
    out = files / "report.json"
    assert cli("verify", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--out", out) == 0
    assert {"sl", "tok"} <= set(json.loads(out.read_text()))
    code = cli("verify", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--tol-a", "1e-300", "--tol-r", "1e-300", "--out", out)
    assert code == 2
    assert error_of(capsys)["error"] == "ReconstructionError"
    assert json.loads(out.read_text())["passed"] is False


def test_dtw_identical_series(files, capsys):
    rows = "model,checkpoint,decomposition,term,indicator,value\n" + "".join(
        f"m,{c},sl,i,nr,{0.1 * c * c}\n" for c in range(5))
    for name in ("a.csv", "b.csv"):
        (files / name).write_text(rows)
    assert cli("dtw", "--series", files / "a.csv", "--series", files / "b.csv") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["distance"] == 0.0 and rec["model_a"] == "m" and rec["model_b"] == "m#1"


def test_shape_mismatch_in_header(files, capsys):
    raw = model_to_bytes(init_random(CFG, 3))
    prefix = struct.Struct("<4sIQ")
    magic, version, n = prefix.unpack_from(raw)
    header = json.loads(raw[prefix.size:prefix.size + n])
    header["tensors"]["dec.sl1.ma.W_O"]["shape"] = [7, 8]
    blob = json.dumps(header, separators=(",", ":")).encode()
    bad = prefix.pack(magic, version, len(blob)) + blob + raw[prefix.size + n:]
    (files / "bad.dcpl").write_bytes(bad)
    code = cli("decompose", "--decomp", "tok", "--model", files / "bad.dcpl",
               "--corpus", files / "c.jsonl")
    assert code == 1
    err = error_of(capsys)
    assert err["error"] == "ShapeMismatch" and "W_O" in err["message"]


@pytest.mark.parametrize("argv,kind", [
    (["frobnicate"], "UnknownSubcommand"),
    ([], "UnknownSubcommand"),
    (["verify", "--model", "nope.dcpl", "--corpus", "nope.jsonl"], "InvalidManifest"),
    (["verify", "--bogus"], "InvalidManifest"),
    (["dtw"], "InvalidManifest"),
])
def test_validation_errors_exit_1(argv, kind, capsys):
    assert run(argv) == 1
    assert error_of(capsys)["error"] == kind


def test_decompose_dump_format(files):
    out = files / "sl.jsonl"
    assert cli("decompose", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--decomp", "sl", "--out", out) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    tok = [r for r in recs if "term" in r]
    ver = [r for r in recs if "verification" in r]
    assert {r["term"] for r in tok} == set("istfc")
    assert len(ver) == 3 and all(v["verification"]["passed"] for v in ver)
    assert all(len(r["vector"]) == 8 for r in tok)
    # one record per term for each token
    first = [np.array(r["vector"]) for r in tok if r["sentence_id"] == tok[0]["sentence_id"]
             and r["position"] == 0]
    assert len(first) == 5

    out = files / "tok.jsonl"
    assert cli("decompose", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--decomp", "tok", "--out", out) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    subl = {r["sublayer"] for r in recs if "term" in r}
    assert subl == set(range(CFG.num_sublayers + 1))


def test_translate_score_and_permtest(files, capsys):
    hyp = files / "h.jsonl"
    assert cli("translate", "--model", files / "m.dcpl", "--corpus", files / "c.jsonl",
               "--out", hyp) == 0
    assert cli("score", "--corpus", files / "c.jsonl", "--hyps", hyp, "--metric", "bleu",
               "--out", files / "s.csv") == 0
    # forced translation reproduces the references
    assert (files / "s.csv").read_text().splitlines()[1].startswith("0,*,100")
    assert cli("permtest", "--a", "1,2", "--b", "3,4") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["p_value"] == pytest.approx(1 / 3)


def test_series_is_reproducible(files):
    assert cli("init-model", "--out", files / "b.dcpl", "--seed", 9, "--layers", 1, "--dim", 8,
               "--heads", 2, "--ffn", 16, "--vocab", 10, "--max-positions", 24) == 0
    assert cli("interpolate", "--models", f"{files / 'm.dcpl'},{files / 'b.dcpl'}", "--n", 3,
               "--out", files / "ck") == 0
    models = ",".join((files / "ck" / "checkpoints.txt").read_text().split())
    outs = []
    for k in range(2):
        out = files / f"s{k}.csv"
        assert cli("series", "--models", models, "--model-id", "x", "--corpus",
                   files / "c.jsonl", "--mode", "beam", "--beam", 3, "--out", out,
                   "--per-sentence", files / f"p{k}.csv") == 0
        outs.append(out.read_bytes() + (files / f"p{k}.csv").read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[0]
    assert header == "model,checkpoint,decomposition,term,indicator,value"
