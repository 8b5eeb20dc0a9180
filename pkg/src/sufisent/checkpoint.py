"""Versioned binary checkpoint container.

Layout::

    b"SUFICKPT"                 8-byte magic
    uint32 LE                   format version
    uint64 LE                   header length H
    H bytes                     UTF-8 JSON manifest (sorted keys, compact)
    raw float64 LE arrays       in manifest order, offsets relative to here

The manifest holds the configs, the vocabulary and an array directory of
names, shapes and byte offsets. Everything is serialised deterministically
so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import EmbeddingTable, Vocab
from .encoder import EncoderConfig, EncoderParams
from .head import HeadConfig, HeadParams
from .model import Model
from .train import TrainConfig

MAGIC = b"SUFICKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    encoder_config: EncoderConfig
    head_config: HeadConfig
    train_config: TrainConfig
    vocab: list[str]
    arrays: dict[str, np.ndarray]
    best_val_acc: float
    embeddings_trainable: bool = False
    pretrained_rows: list[int] = field(default_factory=list)
    version: int = VERSION

    @classmethod
    def from_model(cls, model: Model, train_config: TrainConfig, best_val_acc: float) -> "Checkpoint":
        """Snapshot (copies) of every model array."""
        return cls(
            encoder_config=model.encoder_config,
            head_config=model.head_config,
            train_config=train_config,
            vocab=list(model.vocab.itos),
            arrays={k: v.copy() for k, v in model.named_arrays().items()},
            best_val_acc=float(best_val_acc),
            embeddings_trainable=model.embeddings.trainable,
            pretrained_rows=[int(i) for i in np.flatnonzero(model.embeddings.pretrained)],
        )

    def to_model(self) -> Model:
        arrays = {k: v.copy() for k, v in self.arrays.items()}
        vocab = Vocab(list(self.vocab))
        pretrained = np.zeros(len(vocab), dtype=bool)
        pretrained[self.pretrained_rows] = True
        emb = EmbeddingTable(arrays["embedding"], pretrained, self.embeddings_trainable)
        enc = EncoderParams.from_arrays(self.encoder_config, arrays)
        head = HeadParams.from_arrays(arrays, self.head_config.nonlinearity)
        return Model(self.encoder_config, self.head_config, vocab, emb, enc, head)

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        probe = Model.init(
            self.encoder_config, self.head_config, Vocab(list(self.vocab)),
            EmbeddingTable(np.zeros((len(self.vocab), self.encoder_config.e)), np.zeros(len(self.vocab), bool)),
            seed=0,
        )
        return {k: v.shape for k, v in probe.named_arrays().items()}

    def manifest(self) -> tuple[dict, list[np.ndarray]]:
        directory, blobs, offset = [], [], 0
        for name in sorted(self.arrays):
            arr = np.ascontiguousarray(self.arrays[name], dtype="<f8")
            directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
            blobs.append(arr)
            offset += arr.nbytes
        header = {
            "version": self.version,
            "encoder_config": self.encoder_config.to_dict(),
            "head_config": self.head_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "vocab": self.vocab,
            "best_val_acc": self.best_val_acc,
            "embeddings_trainable": self.embeddings_trainable,
            "pretrained_rows": self.pretrained_rows,
            "arrays": directory,
        }
        return header, blobs


def save(path: str | Path, ckpt: Checkpoint) -> None:
    header, blobs = ckpt.manifest()
    raw = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, ckpt.version, len(raw)))
        fh.write(raw)
        for arr in blobs:
            fh.write(arr.tobytes())


def load(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated file")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}, expected {VERSION}")
    start = _PREFIX.size + hlen
    if len(data) < start:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None

    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        lo = start + entry["offset"]
        hi = lo + 8 * int(np.prod(shape, dtype=np.int64))
        if hi > len(data):
            raise CheckpointError(f"{path}: truncated data for array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data[lo:hi], dtype="<f8").reshape(shape).astype(np.float64)

    ckpt = Checkpoint(
        encoder_config=EncoderConfig(**header["encoder_config"]),
        head_config=HeadConfig(**header["head_config"]),
        train_config=TrainConfig.from_dict(header["train_config"]),
        vocab=list(header["vocab"]),
        arrays=arrays,
        best_val_acc=header["best_val_acc"],
        embeddings_trainable=header["embeddings_trainable"],
        pretrained_rows=list(header["pretrained_rows"]),
        version=version,
    )
    want = ckpt.expected_shapes()
    for name, shape in want.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name}")
        if arrays[name].shape != shape:
            raise CheckpointError(f"{path}: array {name} has shape {arrays[name].shape}, config implies {shape}")
    extra = set(arrays) - set(want)
    if extra:
        raise CheckpointError(f"{path}: unexpected arrays {sorted(extra)}")
    return ckpt
