import json
import struct

import numpy as np
import pytest

from longmatch.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from longmatch.corpus import Vocab
from longmatch.errors import CheckpointError
from longmatch.transformer import ModelConfig, ModelWeights


CFG = ModelConfig(vocab_size=10, layers=1, heads=2, width=8, ff_width=12,
                  max_len=16, alpha=0.1, seed=5)


def test_header_layout(tmp_path):
    weights = ModelWeights.initialize(CFG)
    path = save_checkpoint(tmp_path / "m.ckpt", weights, CFG)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"MIGN"
    assert struct.unpack_from("<I", raw, 4)[0] == VERSION
    manifest_len = struct.unpack_from("<I", raw, 8)[0]
    manifest = json.loads(raw[12:12 + manifest_len].decode("utf-8"))
    assert {"tensors", "config", "vocab", "pipeline"} <= set(manifest)
    for entry in manifest["tensors"]:
        assert set(entry) == {"name", "shape", "offset"}
    # Data section is exactly the declared tensors, 4 bytes per value.
    total = sum(4 * int(np.prod(e["shape"] or [1]))
                for e in manifest["tensors"])
    assert len(raw) - (12 + manifest_len) == total


def test_round_trip_is_float32_exact(tmp_path):
    weights = ModelWeights.initialize(CFG)
    path = save_checkpoint(tmp_path / "m.ckpt", weights, CFG)
    loaded = load_checkpoint(path)
    assert set(loaded.weights.names()) == set(weights.names())
    for name, original in weights.items():
        expected = original.astype("<f4").astype(np.float64)
        assert np.array_equal(loaded.weights[name], expected)
        assert loaded.weights[name].shape == original.shape
    assert loaded.config == CFG


def test_vocab_and_pipeline_round_trip(tmp_path):
    vocab = Vocab(["alpha", "beta", "gamma"])
    weights = ModelWeights.initialize(CFG)
    pipeline = {"lambda": 5, "sentence_damping": 0.85,
                "sentence_iterations": 100}
    path = save_checkpoint(tmp_path / "m.ckpt", weights, CFG, vocab=vocab,
                           pipeline=pipeline)
    loaded = load_checkpoint(path)
    assert loaded.vocab is not None
    assert loaded.vocab.id_to_token == vocab.id_to_token
    assert loaded.pipeline == pipeline


def test_missing_file_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    weights = ModelWeights.initialize(CFG)
    path = save_checkpoint(tmp_path / "m.ckpt", weights, CFG)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 40])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_unsupported_version_rejected(tmp_path):
    weights = ModelWeights.initialize(CFG)
    path = save_checkpoint(tmp_path / "m.ckpt", weights, CFG)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
