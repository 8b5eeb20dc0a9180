import json
import struct

import numpy as np
import pytest

from sufisent.checkpoint import MAGIC, Checkpoint, CheckpointError, load, save
from sufisent.data import build_vocab, gen_toy_nli, random_embeddings
from sufisent.encoder import EncoderConfig, Variant
from sufisent.head import HeadConfig
from sufisent.model import Model
from sufisent.train import TrainConfig

SENTENCES = ["a01 a02 a03", "b1 a05 a07 a09", "a01", "unseen words here"]


def model_for(variant, seed=0):
    data = gen_toy_nli(0, 30)
    vocab = build_vocab(data)
    return Model.init(EncoderConfig(variant, 3, 4), HeadConfig(fc_dim=5), vocab,
                      random_embeddings(vocab, 4, seed=seed), seed=seed)


def split(raw: bytes):
    _, version, hlen = struct.unpack_from("<8sIQ", raw)
    start = 20 + hlen
    return version, json.loads(raw[20:start]), raw[start:]


def join(version, header, body):
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack("<8sIQ", MAGIC, version, len(h)) + h + body


@pytest.mark.parametrize("variant", list(Variant))
def test_roundtrip_byte_identical_and_encodings_exact(tmp_path, variant):
    model = model_for(variant)
    ckpt = Checkpoint.from_model(model, TrainConfig(seed=3), 0.625)
    save(tmp_path / "a.ckpt", ckpt)
    back = load(tmp_path / "a.ckpt")
    save(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert back.train_config == TrainConfig(seed=3) and back.best_val_acc == 0.625
    for k, v in ckpt.arrays.items():
        np.testing.assert_array_equal(back.arrays[k], v)
    restored = back.to_model()
    diff = restored.encode_sentences(SENTENCES) - model.encode_sentences(SENTENCES)
    assert np.abs(diff).max() == 0.0


def test_tied_variant_reloads_tied(tmp_path):
    save(tmp_path / "t.ckpt", Checkpoint.from_model(model_for("sufisent-tied"), TrainConfig(), 0.5))
    restored = load(tmp_path / "t.ckpt").to_model()
    assert restored.encoder.fwd_suffix is restored.encoder.fwd_prefix
    assert not any("suffix" in k for k in restored.named_arrays())


def test_file_layout(tmp_path):
    save(tmp_path / "c.ckpt", Checkpoint.from_model(model_for("bilstm-max"), TrainConfig(), 0.5))
    raw = (tmp_path / "c.ckpt").read_bytes()
    assert raw[:8] == b"SUFICKPT"
    version, header, body = split(raw)
    assert version == 1 and header["version"] == 1
    names = [a["name"] for a in header["arrays"]]
    assert names == sorted(names)
    assert len(body) == sum(8 * int(np.prod(a["shape"])) for a in header["arrays"])


def test_tampered_shape_names_the_array(tmp_path):
    save(tmp_path / "c.ckpt", Checkpoint.from_model(model_for("sufisent"), TrainConfig(), 0.5))
    version, header, body = split((tmp_path / "c.ckpt").read_bytes())
    entry = next(a for a in header["arrays"] if a["name"] == "head.b2")
    entry["shape"] = [4]
    (tmp_path / "t.ckpt").write_bytes(join(version, header, body))
    with pytest.raises(CheckpointError, match="head.b2"):
        load(tmp_path / "t.ckpt")


def test_version_mismatch(tmp_path):
    save(tmp_path / "c.ckpt", Checkpoint.from_model(model_for("sufisent"), TrainConfig(), 0.5))
    _, header, body = split((tmp_path / "c.ckpt").read_bytes())
    (tmp_path / "v.ckpt").write_bytes(join(2, header, body))
    with pytest.raises(CheckpointError, match="version"):
        load(tmp_path / "v.ckpt")


def test_truncated_file(tmp_path):
    save(tmp_path / "c.ckpt", Checkpoint.from_model(model_for("sufisent"), TrainConfig(), 0.5))
    raw = (tmp_path / "c.ckpt").read_bytes()
    for cut in (10, 40, len(raw) - 8):
        (tmp_path / "t.ckpt").write_bytes(raw[:cut])
        with pytest.raises(CheckpointError, match="truncated"):
            load(tmp_path / "t.ckpt")


def test_missing_and_extra_arrays(tmp_path):
    save(tmp_path / "c.ckpt", Checkpoint.from_model(model_for("sufisent"), TrainConfig(), 0.5))
    version, header, body = split((tmp_path / "c.ckpt").read_bytes())
    dropped = dict(header, arrays=[a for a in header["arrays"] if a["name"] != "head.bout"])
    (tmp_path / "m.ckpt").write_bytes(join(version, dropped, body))
    with pytest.raises(CheckpointError, match="head.bout"):
        load(tmp_path / "m.ckpt")
    extra = dict(header, arrays=header["arrays"] + [{"name": "stray", "shape": [1], "offset": 0}])
    (tmp_path / "x.ckpt").write_bytes(join(version, extra, body))
    with pytest.raises(CheckpointError, match="stray"):
        load(tmp_path / "x.ckpt")


def test_not_a_checkpoint(tmp_path):
    (tmp_path / "n.ckpt").write_bytes(b"NOTACKPT" + bytes(40))
    with pytest.raises(CheckpointError):
        load(tmp_path / "n.ckpt")


def test_snapshot_is_independent_of_later_training():
    model = model_for("sufisent")
    ckpt = Checkpoint.from_model(model, TrainConfig(), 0.5)
    model.head.W1 += 1.0
    assert not np.array_equal(ckpt.arrays["head.W1"], model.head.W1)
