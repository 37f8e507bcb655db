"""Model container and corpus file formats.

Container layout (all integers little-endian)::

    b"DCPL" | version: u32 | header_len: u64 | header: UTF-8 JSON | payload

The header is ``{"config": {...}, "tensors": {name: {"shape": [...],
"offset": int}}}`` where ``offset`` counts bytes from the start of the
payload. Tensors are stored row-major as little-endian float64.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .errors import (InvalidConfig, MalformedContainer, MalformedCorpus, NonFiniteTensor,
                     SequenceTooLong, ShapeMismatch, TokenOutOfRange)
from .model import Model, ModelConfig, expected_shapes

MAGIC = b"DCPL"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_F64 = np.dtype("<f8")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def model_to_bytes(model: Model) -> bytes:
    index = {}
    chunks = []
    offset = 0
    for name, arr in model.tensors.items():
        raw = np.ascontiguousarray(arr, dtype=_F64).tobytes()
        index[name] = {"shape": list(arr.shape), "offset": offset}
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"config": model.config.to_dict(), "tensors": index},
                        separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def save_model(model: Model, path) -> None:
    atomic_write_bytes(path, model_to_bytes(model))


def model_from_bytes(data: bytes) -> Model:
    if len(data) < _PREFIX.size:
        raise MalformedContainer("file too short for container prefix")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise MalformedContainer(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedContainer(f"unsupported container version {version}")
    start = _PREFIX.size
    if start + header_len > len(data):
        raise MalformedContainer("header extends past end of file")
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        config_dict = header["config"]
        index = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedContainer(f"unreadable header: {exc}") from None
    try:
        config = ModelConfig.from_dict(config_dict)
    except InvalidConfig as exc:
        raise MalformedContainer(f"invalid config in header: {exc}") from None

    payload = memoryview(data)[start + header_len:]
    shapes = expected_shapes(config)
    tensors = {}
    for name, expected in shapes.items():
        if name not in index:
            raise ShapeMismatch(f"tensor {name!r} missing from container")
        entry = index[name]
        shape = tuple(int(s) for s in entry["shape"])
        if shape != expected:
            raise ShapeMismatch(f"tensor {name!r} has shape {shape}, expected {expected}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * _F64.itemsize
        off = int(entry["offset"])
        if off < 0 or off + nbytes > len(payload):
            raise MalformedContainer(f"tensor {name!r} extends past end of payload")
        arr = np.frombuffer(payload[off:off + nbytes], dtype=_F64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteTensor(f"tensor {name!r} contains NaN or Inf")
        tensors[name] = arr.astype(np.float64)
    extra = sorted(set(index) - set(shapes))
    if extra:
        raise ShapeMismatch(f"unexpected tensor {extra[0]!r} in container")
    return Model(config, tensors)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


@dataclass(frozen=True)
class Sentence:
    id: str
    src_ids: tuple
    tgt_ids: tuple


def validate_ids(ids: Sequence[int], config: ModelConfig, what: str = "sequence",
                 reserve: int = 0) -> None:
    """Check token ids and length; ``reserve`` counts extra decoder positions."""
    for tok in ids:
        if tok < 0 or tok >= config.vocab_size:
            raise TokenOutOfRange(f"{what}: token id {tok} outside [0, {config.vocab_size})")
    if len(ids) + reserve > config.max_positions:
        raise SequenceTooLong(
            f"{what}: length {len(ids)} (+{reserve}) exceeds max_positions {config.max_positions}")


def read_corpus(path) -> List[Sentence]:
    sentences = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sent = Sentence(str(rec["id"]), tuple(int(t) for t in rec["src_ids"]),
                                tuple(int(t) for t in rec["tgt_ids"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedCorpus(f"{path}:{lineno}: {exc}") from None
            if sent.id in seen:
                raise MalformedCorpus(f"{path}:{lineno}: duplicate sentence id {sent.id!r}")
            seen.add(sent.id)
            sentences.append(sent)
    return sentences


def validate_corpus(corpus: Iterable[Sentence], config: ModelConfig) -> None:
    for sent in corpus:
        validate_ids(sent.src_ids, config, f"sentence {sent.id} src")
        validate_ids(sent.tgt_ids, config, f"sentence {sent.id} tgt", reserve=1)


def corpus_to_jsonl(corpus: Iterable[Sentence]) -> str:
    return "".join(
        json.dumps({"id": s.id, "src_ids": list(s.src_ids), "tgt_ids": list(s.tgt_ids)}) + "\n"
        for s in corpus)


def write_corpus(corpus: Iterable[Sentence], path) -> None:
    atomic_write_bytes(path, corpus_to_jsonl(corpus).encode("utf-8"))


def random_corpus(config: ModelConfig, n: int, seed: int, min_len: int = 1,
                  max_len: int = 16) -> List[Sentence]:
    """Random sentences of non-end-of-sequence tokens, for desk-scale runs."""
    rng = np.random.Generator(np.random.Philox(seed))
    max_len = min(max_len, config.max_positions - 1)
    out = []
    for i in range(n):
        src = rng.integers(1, config.vocab_size, size=int(rng.integers(min_len, max_len + 1)))
        tgt = rng.integers(1, config.vocab_size, size=int(rng.integers(min_len, max_len + 1)))
        out.append(Sentence(f"s{i}", tuple(int(t) for t in src), tuple(int(t) for t in tgt)))
    return out
