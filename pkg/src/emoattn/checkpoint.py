"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset 0    8 bytes   magic  b"EMOATTN\\0"
    offset 8    uint32    format version (currently 1)
    offset 12   uint64    header length H in bytes
    offset 20   H bytes   UTF-8 JSON header, keys sorted, no whitespace
    offset 20+H           tensor payloads, float64 little-endian, C order,
                          concatenated in the order of header["tensors"]

The header holds ``config``, ``train_config``, ``seed``, ``labels``,
``vocab`` (token list, index = id, entry 0 is the pad symbol), ``oov_ids``,
``lexicon`` (word -> 11 task-label flags, or null), ``label_map`` and
``tensors``: a list of ``{"name", "shape", "offset", "nbytes"}`` records
sorted by name, where ``offset`` is relative to the start of the payload
section. Nothing time- or host-dependent is written, so identical runs
produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .labels import LABELS
from .model import ModelConfig
from .resources import Vocabulary

MAGIC = b"EMOATTN\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    seed: int
    train_config: dict = field(default_factory=dict)
    lexicon: dict[str, np.ndarray] | None = None
    label_map: tuple[str, ...] | None = None

    def to_bytes(self) -> bytes:
        names = sorted(self.params)
        records, offset = [], 0
        for name in names:
            arr = self.params[name]
            nbytes = arr.size * 8
            records.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
            offset += nbytes
        header = {
            "config": self.config.to_dict(),
            "train_config": self.train_config,
            "seed": int(self.seed),
            "labels": list(LABELS),
            "vocab": self.vocab.tokens,
            "oov_ids": sorted(self.vocab.oov_ids),
            "lexicon": None if self.lexicon is None
            else {w: [int(x) for x in v] for w, v in sorted(self.lexicon.items())},
            "label_map": None if self.label_map is None else list(self.label_map),
            "tensors": records,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        parts = [MAGIC, struct.pack("<IQ", VERSION, len(blob)), blob]
        parts += [np.ascontiguousarray(self.params[n], dtype="<f8").tobytes() for n in names]
        return b"".join(parts)

    def save(self, path) -> str:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return hashlib.sha256(data).hexdigest()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.config, self.vocab, {k: v.copy() for k, v in self.params.items()},
                          self.seed, dict(self.train_config), self.lexicon, self.label_map)

    @classmethod
    def from_bytes(cls, data: bytes, source="<bytes>") -> "Checkpoint":
        if data[:8] != MAGIC:
            raise CheckpointError(f"{source}: not an emoattn checkpoint")
        version, hlen = struct.unpack_from("<IQ", data, 8)
        if version != VERSION:
            raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
        if header["labels"] != list(LABELS):
            raise CheckpointError(f"{source}: label order differs from {LABELS}")
        base = 20 + hlen
        params = {}
        for rec in header["tensors"]:
            start = base + rec["offset"]
            arr = np.frombuffer(data, dtype="<f8", count=rec["nbytes"] // 8, offset=start)
            params[rec["name"]] = arr.astype(np.float64).reshape(rec["shape"])
        vocab = Vocabulary(header["vocab"], set(header["oov_ids"]))
        lex = header["lexicon"]
        if lex is not None:
            lex = {w: np.array(v, dtype=np.int64) for w, v in lex.items()}
        lmap = header["label_map"]
        return cls(ModelConfig.from_dict(header["config"]), vocab, params, header["seed"],
                   header["train_config"], lex, None if lmap is None else tuple(lmap))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), source=str(path))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
