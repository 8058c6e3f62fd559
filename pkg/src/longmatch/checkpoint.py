"""Binary checkpoint format.

Layout: magic "MIGN", format version (u32 LE), manifest byte length
(u32 LE), manifest JSON (UTF-8), then raw little-endian float32 tensor
data, row-major, at the offsets the manifest declares (relative to the
start of the data section). The manifest lists every tensor's name, shape
and offset and also carries the model config, the vocabulary and optional
pipeline settings so a checkpoint is self-contained.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .corpus import SPECIAL_TOKENS, Vocab
from .errors import CheckpointError
from .transformer import ModelConfig, ModelWeights

MAGIC = b"MIGN"
VERSION = 1


class CheckpointData(NamedTuple):
    weights: ModelWeights
    config: ModelConfig
    vocab: Vocab | None
    pipeline: dict


def save_checkpoint(path: str | Path, weights: ModelWeights, cfg: ModelConfig,
                    vocab: Vocab | None = None,
                    pipeline: dict | None = None) -> Path:
    """Write weights (as float32) plus config/vocab metadata."""
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name, arr in weights.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    manifest = {
        "tensors": entries,
        "config": asdict(cfg),
        "vocab": vocab.id_to_token if vocab is not None else None,
        "pipeline": pipeline or {},
    }
    manifest_bytes = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path: str | Path) -> CheckpointData:
    """Read a checkpoint; tensors come back as float64 arrays."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    manifest_len = struct.unpack_from("<I", raw, 8)[0]
    manifest_end = 12 + manifest_len
    if manifest_end > len(raw):
        raise CheckpointError(f"{path} is truncated")
    try:
        manifest = json.loads(raw[12:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad manifest in {path}: {exc}") from exc

    data = raw[manifest_end:]
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(data):
            raise CheckpointError(f"tensor {entry['name']} exceeds data section")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)

    cfg = ModelConfig(**manifest["config"])
    vocab = None
    if manifest.get("vocab") is not None:
        id_to_token = manifest["vocab"]
        if tuple(id_to_token[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise CheckpointError("vocab in manifest lacks the special tokens")
        vocab = Vocab(id_to_token[len(SPECIAL_TOKENS):])
    return CheckpointData(weights=ModelWeights(tensors), config=cfg,
                          vocab=vocab, pipeline=manifest.get("pipeline", {}))
