"""SSRC checkpoint container round trips and corruption handling."""

import numpy as np
import pytest

from ssr3d import FormatError
from ssr3d.checkpoint import load_checkpoint, save_checkpoint
from ssr3d.data import HsiCube
from ssr3d.model import Ssrnet, SsrnetConfig


def tiny_model():
    cfg = SsrnetConfig(d_modules=1, units_per_module=2, filters=3, scale=2)
    return Ssrnet.create(cfg, seed=21)


class TestRoundTrip:
    def test_config_and_mean_survive(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ssrc"
        save_checkpoint(path, model, mean=0.3125)
        loaded, mean = load_checkpoint(path)
        assert loaded.config == model.config
        assert mean == 0.3125

    def test_round_trip_is_idempotent_in_forward(self, tmp_path):
        # float32 storage quantizes once; after that, save/load is exact
        model = tiny_model()
        p1, p2 = tmp_path / "a.ssrc", tmp_path / "b.ssrc"
        save_checkpoint(p1, model, mean=0.0)
        m1, _ = load_checkpoint(p1)
        save_checkpoint(p2, m1, mean=0.0)
        m2, _ = load_checkpoint(p2)
        cube = HsiCube(np.random.default_rng(0).random((5, 8, 8), dtype=np.float32))
        assert np.array_equal(m1.forward(cube).values, m2.forward(cube).values)
        assert p1.read_bytes() == p2.read_bytes()

    def test_values_match_float32_cast(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ssrc"
        save_checkpoint(path, model)
        loaded, _ = load_checkpoint(path)
        for name, p in model.store.items():
            want = p.weight.astype(np.float32).astype(np.float64)
            assert np.array_equal(loaded.store[name].weight, want)


class TestCorruption:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ssrc"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_crc_flip(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ssrc"
        save_checkpoint(path, model)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x5A
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="CRC"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "m.ssrc"
        save_checkpoint(path, model)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(FormatError):
            load_checkpoint(path)
