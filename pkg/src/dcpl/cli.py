"""Command-line front end.

Every subcommand writes its outputs atomically. Exit status is 0 on success,
1 on validation errors and 2 on numerical failures; errors are reported as
one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .decomp_sl import TOL_A, TOL_R, decompose_sl
from .decomp_tok import decompose_tok
from .errors import (DcplError, InvalidManifest, ReconstructionError, UnknownSubcommand)
from .indicators import INDICATORS
from .io import (Sentence, atomic_write_bytes, load_model, read_corpus, save_model,
                 validate_corpus)
from .model import ModelConfig, init_random, interpolate_checkpoints
from .pipeline import (DEFAULT_BEAM, analyze_corpus, corpus_means, decode_sentence,
                       parallel_map, sentence_means)
from .scoring import (CORPUS_KEY, ScoreTable, bleu_corpus, chrf_sentence, load_scores,
                      render_ids, save_scores)
from .stats import (corpus_correlation_protocol, dtw_distance, pearson, pitman_test,
                    sentence_correlation_protocol, spearman, z_normalize)

SERIES_HEADER = ("model", "checkpoint", "decomposition", "term", "indicator", "value")
SENTENCE_HEADER = ("model", "checkpoint", "sentence_id", "decomposition", "term", "indicator",
                   "value")
HEATMAP_HEADER = ("term", "indicator", "model_row", "model_col", "z_distance")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write_bytes(out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _split(value: Optional[str]) -> List[str]:
    return [v for v in (value or "").split(",") if v]


@dataclass
class RunManifest:
    """Validated inputs shared by the model-driven subcommands."""

    models: List[str] = field(default_factory=list)
    corpus: Optional[str] = None
    decomp: str = "sl"
    mode: str = "forced"
    beam: int = DEFAULT_BEAM
    indicators: Sequence[str] = INDICATORS
    tol_a: float = TOL_A
    tol_r: float = TOL_R
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        for path in self.models + ([self.corpus] if self.corpus else []):
            if not Path(path).is_file():
                raise InvalidManifest(f"no such file: {path}")
        if not (self.tol_a > 0 and self.tol_r > 0):
            raise InvalidManifest("tolerances must be positive")
        if self.beam < 1:
            raise InvalidManifest("beam must be >= 1")
        if self.out and not Path(self.out).resolve().parent.is_dir():
            raise InvalidManifest(f"output directory does not exist: {self.out}")

    @classmethod
    def from_args(cls, args) -> "RunManifest":
        models = list(getattr(args, "model", None) or []) + _split(getattr(args, "models", None))
        indicator = getattr(args, "indicator", None)
        return cls(models=models, corpus=getattr(args, "corpus", None),
                   decomp=getattr(args, "decomp", None) or "sl",
                   mode=getattr(args, "mode", None) or "forced",
                   beam=getattr(args, "beam", DEFAULT_BEAM),
                   indicators=(indicator,) if indicator else INDICATORS,
                   tol_a=getattr(args, "tol_a", TOL_A), tol_r=getattr(args, "tol_r", TOL_R),
                   seed=getattr(args, "seed", 0), out=getattr(args, "out", None))


def _load_corpus(path, model) -> List[Sentence]:
    corpus = read_corpus(path)
    validate_corpus(corpus, model.config)
    return corpus


def _decomps(value: Optional[str]) -> List[str]:
    return ["sl", "tok"] if value in (None, "both") else [value]


# -- subcommands -----------------------------------------------------------

def cmd_init_model(args) -> int:
    cfg = ModelConfig(num_layers=args.layers, model_dim=args.dim, num_heads=args.heads,
                      ffn_dim=args.ffn, vocab_size=args.vocab, activation=args.activation,
                      ln_epsilon=args.ln_epsilon, max_positions=args.max_positions)
    model = init_random(cfg, args.seed, bias_scale=args.bias_scale, gain_scale=args.gain_scale)
    save_model(model, args.out)
    return 0


def cmd_interpolate(args) -> int:
    paths = list(args.model or []) + _split(args.models)
    if len(paths) != 2:
        raise InvalidManifest("interpolate needs exactly two models")
    RunManifest(models=paths)
    a, b = load_model(paths[0]), load_model(paths[1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for k, m in enumerate(interpolate_checkpoints(a, b, args.n)):
        name = out / f"ckpt_{k:03d}.dcpl"
        save_model(m, name)
        names.append(str(name))
    atomic_write_bytes(out / "checkpoints.txt", ("\n".join(names) + "\n").encode("utf-8"))
    return 0


def cmd_translate(args) -> int:
    man = RunManifest.from_args(args)
    model = load_model(man.models[0])
    corpus = _load_corpus(man.corpus, model)

    def one(sent):
        _, hyp, complete = decode_sentence(model, sent, man.mode, man.beam, args.max_len)
        return {"id": sent.id, "src_ids": list(sent.src_ids), "tgt_ids": hyp,
                "complete": complete}

    _emit(_jsonl(parallel_map(one, corpus, args.workers)), man.out)
    return 0


def cmd_decompose(args) -> int:
    man = RunManifest.from_args(args)
    model = load_model(man.models[0])
    corpus = _load_corpus(man.corpus, model)

    def one(sent):
        trace, _, _ = decode_sentence(model, sent, man.mode, man.beam, args.max_len)
        records = []
        if man.decomp == "sl":
            dec = decompose_sl(model, trace)
            for t in range(trace.length):
                for term, arr in dec.terms.items():
                    records.append({"sentence_id": sent.id, "position": t, "term": term,
                                    "vector": arr[t].tolist()})
            report = dec.verify(man.tol_a, man.tol_r)
        else:
            dec = decompose_tok(model, trace)
            for lam in range(dec.num_sublayers + 1):
                for t in range(trace.length):
                    for term, arr in dec.terms.items():
                        records.append({"sentence_id": sent.id, "sublayer": lam, "position": t,
                                        "term": term, "vector": arr[lam, t].tolist()})
            report = dec.verify(None, man.tol_a, man.tol_r)
        records.append({"sentence_id": sent.id, "verification": report.to_dict()})
        return records

    chunks = parallel_map(one, corpus, args.workers)
    _emit(_jsonl(r for chunk in chunks for r in chunk), man.out)
    return 0


def cmd_verify(args) -> int:
    man = RunManifest.from_args(args)
    model = load_model(man.models[0])
    corpus = _load_corpus(man.corpus, model)
    kinds = _decomps(args.decomp)

    def one(sent):
        trace, _, _ = decode_sentence(model, sent, man.mode, man.beam, args.max_len)
        out = {}
        if "sl" in kinds:
            out["sl"] = decompose_sl(model, trace).verify(man.tol_a, man.tol_r)
        if "tok" in kinds:
            out["tok"] = decompose_tok(model, trace).verify(None, man.tol_a, man.tol_r)
        return out

    results = parallel_map(one, corpus, args.workers)
    report = {"tol_a": man.tol_a, "tol_r": man.tol_r, "mode": man.mode, "sentences": len(corpus)}
    failures = []
    for kind in kinds:
        reps = [r[kind] for r in results]
        report[kind] = {"max_abs_residual": max(r.max_abs_residual for r in reps),
                        "max_rel_residual": max(r.max_rel_residual for r in reps),
                        "passed": all(r.passed for r in reps)}
        failures += [f"{kind}:{s.id}" for s, r in zip(corpus, reps) if not r.passed]
    report["passed"] = not failures
    report["failures"] = failures
    _emit(json.dumps(report, sort_keys=True) + "\n", man.out)
    if failures:
        raise ReconstructionError(f"{len(failures)} decompositions violate the tolerance "
                                  f"criterion (first: {failures[0]})")
    return 0


def cmd_indicators(args) -> int:
    man = RunManifest.from_args(args)
    model = load_model(man.models[0])
    corpus = _load_corpus(man.corpus, model)
    kinds = _decomps(args.decomp)
    per_sentence = analyze_corpus(model, corpus, kinds, man.indicators, man.mode, man.beam,
                                  args.max_len, args.workers)
    rows = []
    means = corpus_means(per_sentence)
    by_sent = sentence_means(per_sentence, [s.id for s in corpus])
    for key in per_sentence[0]:
        kind, term, ind = key
        if args.term and term != args.term:
            continue
        for s in corpus:
            rows.append([s.id, kind, term, ind, fmt(by_sent[key][s.id])])
        rows.append([CORPUS_KEY, kind, term, ind, fmt(means[key])])
    _emit(_csv_text(("sentence_id", "decomposition", "term", "indicator", "value"), rows),
          man.out)
    return 0


def cmd_series(args) -> int:
    man = RunManifest.from_args(args)
    if not man.models:
        raise InvalidManifest("series needs --models")
    kinds = _decomps(args.decomp)
    model_id = args.model_id or Path(man.models[0]).parent.name or "model"
    series_rows, sentence_rows = [], []
    corpus = None
    for ckpt, path in enumerate(man.models):
        model = load_model(path)
        if corpus is None:
            corpus = _load_corpus(man.corpus, model)
        per_sentence = analyze_corpus(model, corpus, kinds, man.indicators, man.mode, man.beam,
                                      args.max_len, args.workers)
        means = corpus_means(per_sentence)
        by_sent = sentence_means(per_sentence, [s.id for s in corpus])
        for (kind, term, ind), value in means.items():
            if args.term and term != args.term:
                continue
            series_rows.append([model_id, ckpt, kind, term, ind, fmt(value)])
            for s in corpus:
                sentence_rows.append([model_id, ckpt, s.id, kind, term, ind,
                                      fmt(by_sent[(kind, term, ind)][s.id])])
    if args.per_sentence:
        atomic_write_bytes(args.per_sentence,
                           _csv_text(SENTENCE_HEADER, sentence_rows).encode("utf-8"))
    _emit(_csv_text(SERIES_HEADER, series_rows), man.out)
    return 0


def read_series(path) -> Dict[tuple, Dict[int, float]]:
    """``{(model, decomposition, term, indicator): {checkpoint: value}}``."""
    out: Dict[tuple, Dict[int, float]] = defaultdict(dict)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SERIES_HEADER:
            raise InvalidManifest(f"{path}: expected header {','.join(SERIES_HEADER)}")
        for row in reader:
            try:
                key = (row["model"], row["decomposition"], row["term"], row["indicator"])
                out[key][int(row["checkpoint"])] = float(row["value"])
            except ValueError:
                raise InvalidManifest(f"{path}: malformed row {row}") from None
    return dict(out)


def _filter(keys, args):
    for key in keys:
        _, kind, term, ind = key
        if getattr(args, "decomp", None) not in (None, "both") and kind != args.decomp:
            continue
        if getattr(args, "term", None) and term != args.term:
            continue
        if getattr(args, "indicator", None) and ind != args.indicator:
            continue
        yield key


def _ordered_values(d: Dict[int, float]) -> List[float]:
    return [d[c] for c in sorted(d)]


def cmd_dtw(args) -> int:
    if not args.series:
        raise InvalidManifest("dtw needs at least one --series file")
    labelled: Dict[tuple, Dict[str, List[float]]] = defaultdict(dict)
    for idx, path in enumerate(args.series):
        for key in _filter(read_series(path), args):
            model, kind, term, ind = key
            group = labelled[(kind, term, ind)]
            label = model if model not in group else f"{model}#{idx}"
            group[label] = _ordered_values(read_series(path)[key])
    records, heat_rows = [], []
    kinds = {k for k, _, _ in labelled}
    if args.out and len(kinds) > 1:
        raise InvalidManifest("heatmap export needs a single decomposition; pass --decomp")
    for (kind, term, ind), group in sorted(labelled.items()):
        names = list(group)
        dists = {}
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                res = dtw_distance(group[a], group[b])
                dists[(a, b)] = res.distance
                records.append({"decomposition": kind, "term": term, "indicator": ind,
                                "model_a": a, "model_b": b, "distance": res.distance,
                                "path_length": res.path_length})
        if args.out and len(dists) >= 2:
            z = z_normalize(dists)
            for (a, b), v in z.items():
                heat_rows.append([term, ind, a, b, fmt(v)])
                heat_rows.append([term, ind, b, a, fmt(v)])
    if args.out:
        atomic_write_bytes(args.out, _csv_text(HEATMAP_HEADER, heat_rows).encode("utf-8"))
    _emit(_jsonl(records), args.distances)
    return 0


def read_heatmap(path) -> Dict[tuple, Dict[tuple, float]]:
    out: Dict[tuple, Dict[tuple, float]] = defaultdict(dict)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HEATMAP_HEADER:
            raise InvalidManifest(f"{path}: expected header {','.join(HEATMAP_HEADER)}")
        for row in reader:
            out[(row["term"], row["indicator"])][(row["model_row"], row["model_col"])] = \
                float(row["z_distance"])
    return dict(out)


def _floats(value: str) -> List[float]:
    try:
        return [float(v) for v in _split(value)]
    except ValueError:
        raise InvalidManifest(f"expected comma-separated numbers, got {value!r}") from None


def cmd_permtest(args) -> int:
    records = []
    kw = dict(mode=args.perm_mode, seed=args.seed, draws=args.draws)
    if args.heatmap:
        group = set(_split(args.group))
        if len(group) < 2:
            raise InvalidManifest("--group needs at least two model ids")
        for (term, ind), cells in sorted(read_heatmap(args.heatmap).items()):
            within, across = [], []
            seen = set()
            for (a, b), v in sorted(cells.items()):
                pair = frozenset((a, b))
                if pair in seen:
                    continue
                seen.add(pair)
                (within if {a, b} <= group else across).append(v)
            res = pitman_test(within, across, **kw)
            records.append({"term": term, "indicator": ind, "n_within": len(within),
                            "n_across": len(across), **res.to_dict()})
    else:
        res = pitman_test(_floats(args.a), _floats(args.b), **kw)
        records.append(res.to_dict())
    _emit(_jsonl(records), args.out)
    return 0


def _score_tables(items: List[str], models: Sequence[str]) -> Dict[str, ScoreTable]:
    tables = {}
    for item in items:
        if "=" in item:
            model, path = item.split("=", 1)
        elif len(models) == 1:
            model, path = models[0], item
        else:
            raise InvalidManifest(f"--scores {item!r} must be MODEL=PATH with several models")
        tables[model] = load_scores(path)
    return tables


def cmd_correlate_corpus(args) -> int:
    series = read_series(args.series)
    models = sorted({k[0] for k in series})
    tables = _score_tables(args.scores, models)
    records = []
    for key in sorted(_filter(series, args)):
        model = key[0]
        if model not in tables:
            raise InvalidManifest(f"no scores for model {model!r}")
        value = corpus_correlation_protocol(series[key], tables[model], seed=args.seed,
                                            num_pairs=args.num_pairs, pairing=args.pairing)
        records.append({"model": model, "decomposition": key[1], "term": key[2],
                        "indicator": key[3], "abs_spearman": value})
    _emit(_jsonl(records), args.out)
    return 0


def read_sentence_table(path):
    """``{(decomposition, term, indicator): {model: {(checkpoint, sid): value}}}``."""
    out = defaultdict(lambda: defaultdict(dict))
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SENTENCE_HEADER:
            raise InvalidManifest(f"{path}: expected header {','.join(SENTENCE_HEADER)}")
        for row in reader:
            key = (row["decomposition"], row["term"], row["indicator"])
            out[key][row["model"]][(int(row["checkpoint"]), row["sentence_id"])] = \
                float(row["value"])
    return out


def cmd_correlate_sentence(args) -> int:
    table = read_sentence_table(args.per_sentence)
    models = sorted({m for v in table.values() for m in v})
    scores = _score_tables(args.scores, models)
    records = []
    for key in sorted(table):
        kind, term, ind = key
        if args.decomp not in (None, "both") and kind != args.decomp:
            continue
        if (args.term and term != args.term) or (args.indicator and ind != args.indicator):
            continue
        per_model = table[key]
        missing = [m for m in per_model if m not in scores]
        if missing:
            raise InvalidManifest(f"no scores for model {missing[0]!r}")
        names = sorted(per_model)
        value = sentence_correlation_protocol([per_model[m] for m in names],
                                              [scores[m] for m in names], k=args.k,
                                              seed=args.seed)
        records.append({"decomposition": kind, "term": term, "indicator": ind,
                        "models": names, "k": args.k, "abs_spearman": value})
    _emit(_jsonl(records), args.out)
    return 0


def _chrf_ids(hyp, ref) -> float:
    # empty outputs are legal decoder results; score them instead of failing
    if not hyp or not ref:
        return 100.0 if hyp == ref else 0.0
    return chrf_sentence(render_ids(hyp), render_ids(ref))


def cmd_score(args) -> int:
    refs = {s.id: s for s in read_corpus(args.corpus)}
    hyp_files = list(args.hyps or [])
    if not hyp_files:
        raise InvalidManifest("score needs --hyps")
    entries = {}
    for ckpt, path in enumerate(hyp_files):
        hyps = read_corpus(path)
        missing = [h.id for h in hyps if h.id not in refs]
        if missing:
            raise InvalidManifest(f"{path}: sentence {missing[0]!r} not in reference corpus")
        pairs = [(list(h.tgt_ids), list(refs[h.id].tgt_ids)) for h in hyps]
        if args.metric == "bleu":
            if args.granularity == "sentence":
                for h, (hyp, ref) in zip(hyps, pairs):
                    entries[(ckpt, h.id)] = bleu_corpus([hyp], [ref], smooth=args.smooth)
            else:
                entries[(ckpt, CORPUS_KEY)] = bleu_corpus(*zip(*pairs), smooth=args.smooth)
        else:
            sent = [_chrf_ids(hyp, ref) for hyp, ref in pairs]
            if args.granularity == "sentence":
                entries.update({(ckpt, h.id): v for h, v in zip(hyps, sent)})
            else:
                entries[(ckpt, CORPUS_KEY)] = float(np.mean(sent))
    table = ScoreTable(args.granularity, entries)
    if args.out:
        save_scores(table, args.out)
    else:
        sys.stdout.write(table.to_csv())
    return 0


def cmd_compare_decoding(args) -> int:
    forced, beam = read_series(args.forced), read_series(args.beam)
    records = []
    for key in sorted(_filter(forced, args)):
        if key not in beam:
            raise InvalidManifest(f"series {key} missing from {args.beam}")
        a, b = forced[key], beam[key]
        if sorted(a) != sorted(b):
            raise InvalidManifest(f"checkpoints differ for {key}")
        xs, ys = _ordered_values(a), _ordered_values(b)
        records.append({"model": key[0], "decomposition": key[1], "term": key[2],
                        "indicator": key[3], "spearman": spearman(xs, ys),
                        "pearson": pearson(xs, ys)})
    _emit(_jsonl(records), args.out)
    return 0


# -- parser ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidManifest(f"{self.prog}: {message}")


COMMANDS = {}


def _add(sub, name, func, help_text):
    p = sub.add_parser(name, help=help_text, description=help_text)
    p.set_defaults(func=func)
    COMMANDS[name] = p
    return p


def _model_flags(p, corpus=True, decomp=True, mode=True):
    p.add_argument("--model", action="append", help="model container (.dcpl)")
    p.add_argument("--models", help="comma-separated model containers")
    if corpus:
        p.add_argument("--corpus", required=True, help="JSON-lines corpus")
    if decomp:
        p.add_argument("--decomp", choices=["sl", "tok", "both"])
    if mode:
        p.add_argument("--mode", choices=["forced", "beam"], default="forced")
        p.add_argument("--beam", type=int, default=DEFAULT_BEAM)
        p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcpl", description="Linear decompositions of decoder embeddings.")
    parser.add_argument("--version", action="version", version=f"dcpl {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = _add(sub, "init-model", cmd_init_model, "write a random toy model")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--ffn", type=int, default=64)
    p.add_argument("--vocab", type=int, default=32)
    p.add_argument("--activation", choices=["relu", "gelu", "swish"], default="swish")
    p.add_argument("--max-positions", type=int, default=64)
    p.add_argument("--ln-epsilon", type=float, default=0.0)
    p.add_argument("--bias-scale", type=float, default=0.0)
    p.add_argument("--gain-scale", type=float, default=0.0)

    p = _add(sub, "interpolate", cmd_interpolate, "write checkpoints between two models")
    p.add_argument("--model", action="append")
    p.add_argument("--models")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = _add(sub, "translate", cmd_translate, "decode a corpus (forced or beam)")
    _model_flags(p, decomp=False)
    p.add_argument("--out")

    p = _add(sub, "decompose", cmd_decompose, "dump decomposition terms as JSON lines")
    _model_flags(p)
    p.add_argument("--tol-a", type=float, default=TOL_A)
    p.add_argument("--tol-r", type=float, default=TOL_R)
    p.add_argument("--out")

    p = _add(sub, "verify", cmd_verify, "check exact reconstruction of both decompositions")
    _model_flags(p)
    p.add_argument("--tol-a", type=float, default=TOL_A)
    p.add_argument("--tol-r", type=float, default=TOL_R)
    p.add_argument("--out")

    p = _add(sub, "indicators", cmd_indicators, "per-sentence and corpus indicator means")
    _model_flags(p)
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--out")

    p = _add(sub, "series", cmd_series, "corpus-mean indicators across ordered checkpoints")
    _model_flags(p)
    p.add_argument("--model-id")
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--per-sentence", help="also write per-sentence means here")
    p.add_argument("--out")

    p = _add(sub, "dtw", cmd_dtw, "DTW distances between indicator series")
    p.add_argument("--series", action="append", help="series CSV (repeatable)")
    p.add_argument("--decomp", choices=["sl", "tok"])
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--out", help="z-normalized heatmap CSV")
    p.add_argument("--distances", help="raw distances as JSON lines (default: stdout)")

    p = _add(sub, "permtest", cmd_permtest, "Pitman permutation tests")
    p.add_argument("--a", help="comma-separated values of group A")
    p.add_argument("--b", help="comma-separated values of group B")
    p.add_argument("--heatmap", help="heatmap CSV; compares within-group vs other distances")
    p.add_argument("--group", help="comma-separated model ids forming the group")
    p.add_argument("--perm-mode", choices=["exact", "monte_carlo"], default="exact")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = _add(sub, "correlate-corpus", cmd_correlate_corpus,
             "corpus-level indicator/score difference correlation")
    p.add_argument("--series", required=True)
    p.add_argument("--scores", action="append", required=True, help="[MODEL=]scores.csv")
    p.add_argument("--decomp", choices=["sl", "tok", "both"])
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-pairs", type=int, default=None)
    p.add_argument("--pairing", choices=["consecutive", "random"], default="consecutive")
    p.add_argument("--out")

    p = _add(sub, "correlate-sentence", cmd_correlate_sentence,
             "sentence-level indicator/score difference correlation")
    p.add_argument("--per-sentence", required=True)
    p.add_argument("--scores", action="append", required=True, help="[MODEL=]scores.csv")
    p.add_argument("--decomp", choices=["sl", "tok", "both"])
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--k", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = _add(sub, "score", cmd_score, "score hypothesis files against the reference corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hyps", action="append", help="hypotheses JSON lines, one per checkpoint")
    p.add_argument("--metric", choices=["bleu", "chrf"], default="chrf")
    p.add_argument("--granularity", choices=["corpus", "sentence"], default="corpus")
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--out")

    p = _add(sub, "compare-decoding", cmd_compare_decoding,
             "correlate forced-inference and beam-search series")
    p.add_argument("--forced", required=True)
    p.add_argument("--beam", required=True)
    p.add_argument("--decomp", choices=["sl", "tok", "both"])
    p.add_argument("--term")
    p.add_argument("--indicator", choices=list(INDICATORS))
    p.add_argument("--out")
    return parser


def _error_line(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
            raise UnknownSubcommand(f"unknown subcommand {argv[0]!r}")
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UnknownSubcommand("no subcommand given")
        return args.func(args)
    except DcplError as exc:
        _error_line(exc.kind, str(exc))
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        _error_line("InvalidManifest", str(exc))
        return 1


def main() -> None:
    sys.exit(run())
