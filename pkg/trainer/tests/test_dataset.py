"""Manifest parsing, pair loading, and the volume container round trip."""
import json
import shutil

import numpy as np
import pytest
import torch

from octgan import FormatError, PairDataset, read_volume, write_volume
from octgan.octv import LINEAR, SIGNED


class TestOctv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.uniform(-1, 1, size=(5, 4, 3)).astype(np.float32)
        path = tmp_path / "v.octv"
        write_volume(path, data, domain=SIGNED, pitch=(1.5, 2.0, 2.5))
        back, domain, pitch = read_volume(path)
        assert np.array_equal(back, data)
        assert domain == SIGNED
        assert pitch == (1.5, 2.0, 2.5)
        assert back.flags["C_CONTIGUOUS"]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.octv"
        path.write_bytes(b"JUNK" + bytes(60))
        with pytest.raises(FormatError):
            read_volume(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.octv"
        write_volume(path, np.zeros((4, 4, 4), np.float32), domain=SIGNED)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_volume(path)

    def test_non_3d_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_volume(tmp_path / "x.octv", np.zeros((4, 4), np.float32))


class TestPairDataset:
    def test_parses_exported_pairs(self, tiny_pairs):
        ds = PairDataset(tiny_pairs / "manifest.json")
        assert len(ds) == 6
        assert ds.n == 2
        assert ds.channels == 5
        assert ds.window_db[0] < ds.window_db[1]
        pv, target = ds[0]
        assert pv.shape == (5, 32, 32)
        assert target.shape == (1, 32, 32)
        assert pv.dtype == torch.float32
        assert float(pv.min()) >= -1.0 and float(pv.max()) <= 1.0

    def test_padding_to_extent(self, tiny_pairs):
        ds = PairDataset(tiny_pairs / "manifest.json", extent=48)
        pv, target = ds[0]
        assert pv.shape == (5, 48, 48)
        assert target.shape == (1, 48, 48)
        bare = PairDataset(tiny_pairs / "manifest.json")
        raw_pv, raw_target = bare[0]
        assert torch.equal(pv[:, :32, :32], raw_pv)
        assert float(pv[:, 32:, :].abs().max()) == 0.0
        assert torch.equal(target[:, :32, :32], raw_target)

    def test_extent_too_small_rejected(self, tiny_pairs):
        with pytest.raises(FormatError):
            PairDataset(tiny_pairs / "manifest.json", extent=16)

    def test_center_only_keeps_the_middle_bscan(self, tiny_pairs):
        full = PairDataset(tiny_pairs / "manifest.json")
        center = PairDataset(tiny_pairs / "manifest.json", center_only=True)
        assert center.channels == 1
        for i in range(len(full)):
            assert torch.equal(center[i][0][0], full[i][0][full.n])
            assert torch.equal(center[i][1], full[i][1])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            PairDataset(tmp_path / "nope" / "manifest.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            PairDataset(path)

    def test_manifest_without_entries(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(
            {"n": 2, "tnode_window_db": [-40.0, 0.0], "entries": []}))
        with pytest.raises(FormatError):
            PairDataset(path)

    def test_manifest_missing_fields(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"entries": [{}]}))
        with pytest.raises(FormatError):
            PairDataset(path)

    def test_wrong_domain_pair_file(self, tiny_pairs, tmp_path):
        broken = tmp_path / "broken"
        shutil.copytree(tiny_pairs, broken)
        manifest = json.loads((broken / "manifest.json").read_text())
        victim = broken / manifest["entries"][0]["input"]
        data, _, pitch = read_volume(victim)
        write_volume(victim, data, domain=LINEAR, pitch=pitch)
        with pytest.raises(FormatError):
            PairDataset(broken / "manifest.json")

    def test_wrong_bscan_count_pair_file(self, tiny_pairs, tmp_path):
        broken = tmp_path / "broken"
        shutil.copytree(tiny_pairs, broken)
        manifest = json.loads((broken / "manifest.json").read_text())
        victim = broken / manifest["entries"][0]["input"]
        data, _, pitch = read_volume(victim)
        write_volume(victim, data[:, :, :3], domain=SIGNED, pitch=pitch)
        with pytest.raises(FormatError):
            PairDataset(broken / "manifest.json")
