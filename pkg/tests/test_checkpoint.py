import struct

import numpy as np
import pytest
import torch

from densegraph.checkpoint import (FORMAT_VERSION, MAGIC, CheckpointError, generate_corpus,
                                   load_checkpoint, save_checkpoint)
from densegraph.training import TrainConfig, train


@pytest.fixture(scope="module")
def trained(mutag):
    ds = mutag.subset(range(0, len(mutag), 8))
    return train(ds, TrainConfig.for_dataset("MUTAG", epochs=2, batch_size=8, seed=1)).final


def test_round_trip_is_bit_exact(trained, tmp_path):
    p1, p2 = tmp_path / "a.dgck", tmp_path / "b.dgck"
    save_checkpoint(trained, p1)
    back = load_checkpoint(p1)
    save_checkpoint(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    for src, dst in ((trained.generator, back.generator), (trained.critic, back.critic)):
        for (k, v), (k2, v2) in zip(src.state_dict().items(), dst.state_dict().items()):
            assert k == k2 and torch.equal(v, v2)
    assert back.class_stats == trained.class_stats
    assert back.config == trained.config and back.epoch == trained.epoch
    assert back.label_mapping == trained.label_mapping == {-1: 0, 1: 1}


def test_generation_reproduced_after_reload(trained, tmp_path):
    p = tmp_path / "c.dgck"
    save_checkpoint(trained, p)
    assert generate_corpus(load_checkpoint(p), 15, seed=7) == generate_corpus(trained, 15, seed=7)


def test_rng_state_resumes(trained, tmp_path):
    p = tmp_path / "r.dgck"
    save_checkpoint(trained, p)
    assert load_checkpoint(p).rng().random(4).tolist() == trained.rng().random(4).tolist()


def test_header_layout(trained, tmp_path):
    p = tmp_path / "h.dgck"
    save_checkpoint(trained, p)
    data = p.read_bytes()
    magic, version, mlen = struct.unpack_from("<8sIQ", data)
    assert magic == MAGIC and version == FORMAT_VERSION
    n_params = sum(t.numel() for m in (trained.generator, trained.critic)
                   for t in m.state_dict().values())
    assert len(data) == 20 + mlen + 4 * n_params


@pytest.mark.parametrize("cut", [5, 30, -3])
def test_truncated_file_rejected(trained, tmp_path, cut):
    p = tmp_path / "t.dgck"
    save_checkpoint(trained, p)
    data = p.read_bytes()
    p.write_bytes(data[:cut])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_version_and_magic_rejected(trained, tmp_path):
    p = tmp_path / "v.dgck"
    save_checkpoint(trained, p)
    data = bytearray(p.read_bytes())
    bumped = data[:8] + struct.pack("<I", FORMAT_VERSION + 1) + data[12:]
    p.write_bytes(bytes(bumped))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(p)
    p.write_bytes(b"NOTACKPT" + bytes(data[8:]))
    with pytest.raises(CheckpointError, match="not a densegraph"):
        load_checkpoint(p)


def test_flipped_payload_byte_rejected(trained, tmp_path):
    p = tmp_path / "f.dgck"
    save_checkpoint(trained, p)
    data = bytearray(p.read_bytes())
    data[-10] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(p)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.dgck")


def test_generate_corpus_counts(trained):
    graphs = generate_corpus(trained, 10, seed=0)
    assert len(graphs) == 20
    assert [g.label for g in graphs] == [0] * 10 + [1] * 10
    assert all(np.all(g.features.sum(1) == 1) for g in graphs)
