"""Cube container, synthesis, bicubic resampling and patch pipeline."""

import numpy as np
import pytest

from ssr3d import FormatError, GeometryError
from ssr3d.data import (
    HsiCube,
    augment,
    bicubic_resize,
    compute_mean,
    crop_to_multiple,
    degrade,
    extract_patches,
    mean_subtract,
    read_hsc,
    synth_cube,
    write_hsc,
)


class TestHscIO:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        cube = HsiCube(rng.random((8, 16, 16), dtype=np.float32))
        path = tmp_path / "cube.hsc"
        write_hsc(cube, path)
        back = read_hsc(path)
        assert back.shape == (8, 16, 16)
        assert np.array_equal(back.values, cube.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.hsc"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            read_hsc(path)

    def test_dim_overflow_guard(self, tmp_path):
        import struct
        path = tmp_path / "huge.hsc"
        path.write_bytes(b"HSC1" + struct.pack("<III", 2**31 - 1, 512, 512) + b"\x00" * 16)
        with pytest.raises(FormatError, match="declares"):
            read_hsc(path)

    def test_truncated_payload(self, tmp_path):
        cube = HsiCube(np.zeros((2, 8, 8), dtype=np.float32))
        path = tmp_path / "trunc.hsc"
        write_hsc(cube, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-10])
        with pytest.raises(FormatError, match="truncated"):
            read_hsc(path)

    def test_crc_mismatch(self, tmp_path):
        cube = HsiCube(np.ones((2, 8, 8), dtype=np.float32))
        path = tmp_path / "flip.hsc"
        write_hsc(cube, path)
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="CRC"):
            read_hsc(path)


class TestSynthCube:
    @pytest.mark.parametrize("kind", ["gaussian-blobs", "spectral-ramps", "checker"])
    def test_seed_determinism_and_range(self, kind):
        a = synth_cube(kind, 8, 16, 16, seed=42)
        b = synth_cube(kind, 8, 16, 16, seed=42)
        assert np.array_equal(a.values, b.values)
        assert a.values.min() >= 0.0 and a.values.max() <= 1.0

    def test_blobs_adjacent_band_correlation(self):
        cube = synth_cube("gaussian-blobs", 8, 32, 32, seed=1)
        flat = cube.values.reshape(8, -1).astype(np.float64)
        corrs = [np.corrcoef(flat[i], flat[i + 1])[0, 1] for i in range(7)]
        assert np.mean(corrs) > 0.9

    def test_too_small_raises(self):
        with pytest.raises(GeometryError):
            synth_cube("checker", 3, 16, 16)


class TestBicubic:
    def test_constant_preserved(self):
        cube = HsiCube(np.full((3, 16, 16), 0.7, dtype=np.float32))
        out = bicubic_resize(cube, 8, 8)
        assert np.allclose(out.values, 0.7, atol=1e-6)
        up = bicubic_resize(cube, 24, 32)
        assert np.allclose(up.values, 0.7, atol=1e-6)

    def test_linear_ramp_downsample(self):
        h = w = 32
        ramp = np.tile(np.arange(w, dtype=np.float32) / w, (h, 1))
        cube = HsiCube(ramp[None].repeat(2, axis=0))
        out = bicubic_resize(cube, h // 2, w // 2)
        # interior columns (away from clamped edges) must match the analytic ramp
        cols = np.arange(w // 2)
        want = ((cols + 0.5) * 2.0 - 0.5) / w
        got = out.values[0, 8, :]
        assert np.max(np.abs(got[2:-2] - want[2:-2])) <= 1e-6

    def test_shape_contract(self):
        cube = HsiCube(np.zeros((31, 64, 64), dtype=np.float32))
        out = bicubic_resize(cube, 32, 32)
        assert out.shape == (31, 32, 32)

    def test_band_local(self):
        rng = np.random.default_rng(2)
        cube = HsiCube(rng.random((5, 16, 16), dtype=np.float32))
        perm = [4, 2, 0, 1, 3]
        a = bicubic_resize(HsiCube(cube.values[perm]), 8, 8).values
        b = bicubic_resize(cube, 8, 8).values[perm]
        assert np.array_equal(a, b)


class TestPatches:
    def test_count_and_shape(self):
        cube = synth_cube("gaussian-blobs", 6, 64, 64, seed=0)
        ps = extract_patches(cube, 24, 32, seed=3)
        assert len(ps) == 24
        assert all(p.values.shape == (6, 32, 32) for p in ps)

    def test_seeded_positions_repeat(self):
        cube = synth_cube("checker", 4, 40, 40, seed=0)
        a = extract_patches(cube, 5, 16, seed=9)
        b = extract_patches(cube, 5, 16, seed=9)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.values, pb.values)

    def test_patches_are_subblocks(self):
        cube = synth_cube("spectral-ramps", 4, 24, 24, seed=0)
        ps = extract_patches(cube, 8, 8, seed=1)
        for p in ps:
            found = False
            for top in range(17):
                for left in range(17):
                    if np.array_equal(cube.values[:, top:top + 8, left:left + 8], p.values):
                        found = True
                        break
                if found:
                    break
            assert found

    def test_too_large_patch_raises(self):
        cube = synth_cube("checker", 4, 16, 16, seed=0)
        with pytest.raises(GeometryError):
            extract_patches(cube, 1, 32, seed=0)

    def test_indivisible_patch_size_raises(self):
        cube = synth_cube("checker", 4, 16, 16, seed=0)
        with pytest.raises(GeometryError, match="divisible"):
            extract_patches(cube, 1, 15, seed=0, scale=2)


class TestAugment:
    def test_full_orbit_is_24(self):
        cube = synth_cube("gaussian-blobs", 4, 64, 64, seed=0)
        ps = extract_patches(cube, 1, 32, seed=0, scale=2)
        out = augment(ps, flips=True, rotations=True, scales=(1.0, 0.75, 0.5))
        assert len(out) == 24

    def test_rotation_group_identity(self):
        arr = np.random.default_rng(0).random((3, 8, 8)).astype(np.float32)
        r = arr
        for _ in range(4):
            r = np.rot90(r, 1, axes=(1, 2))
        assert np.array_equal(r, arr)
        assert np.array_equal(np.flip(np.flip(arr, axis=2), axis=2), arr)

    def test_flip_rotation_preserve_histogram(self):
        cube = synth_cube("gaussian-blobs", 4, 32, 32, seed=5)
        ps = extract_patches(cube, 1, 16, seed=5, scale=2)
        out = augment(ps, flips=True, rotations=True, scales=(1.0,))
        ref = np.sort(ps.patches[0].values.ravel())
        for p in out:
            assert np.array_equal(np.sort(p.values.ravel()), ref)

    def test_bad_scale_skipped_with_warning(self):
        cube = synth_cube("checker", 4, 32, 32, seed=0)
        ps = extract_patches(cube, 1, 16, seed=0, scale=2)
        with pytest.warns(UserWarning, match="skipped"):
            out = augment(ps, flips=False, rotations=False, scales=(1.0, 0.3))
        assert len(out) == 1


class TestMeanAndDegrade:
    def test_constant_mean(self):
        cubes = [HsiCube(np.full((4, 8, 8), 0.5, dtype=np.float32))]
        mean = compute_mean(cubes)
        assert mean == pytest.approx(0.5, abs=1e-12)
        ps = extract_patches(cubes[0], 2, 8, seed=0)
        sub = mean_subtract(ps, mean)
        assert all(np.allclose(p.values, 0.0) for p in sub)

    def test_subtract_then_add_restores(self):
        cube = synth_cube("gaussian-blobs", 4, 16, 16, seed=7)
        ps = extract_patches(cube, 3, 8, seed=7)
        sub = mean_subtract(ps, 0.2531)
        for orig, s in zip(ps, sub):
            restored = (s.values + 0.2531).astype(np.float32)
            assert np.array_equal(restored, orig.values)

    def test_mean_matches_naive_oracle(self):
        rng = np.random.default_rng(11)
        cubes = [HsiCube(rng.random((4, 8, 8), dtype=np.float32)) for _ in range(3)]
        naive = sum(float(v) for c in cubes for v in c.values.ravel()) / (3 * 4 * 64)
        assert abs(compute_mean(cubes) - naive) <= 1e-12

    def test_degrade_shape_contract(self):
        cube = synth_cube("gaussian-blobs", 4, 32, 32, seed=0)
        lr = degrade(cube.values, 2)
        assert lr.shape == (4, 16, 16)
        with pytest.raises(GeometryError):
            degrade(cube.values[:, :31, :], 2)

    def test_crop_to_multiple(self):
        cube = synth_cube("checker", 4, 37, 41, seed=0)
        c = crop_to_multiple(cube, 512, 3)
        assert c.shape == (4, 36, 39)
        assert np.array_equal(c.values, cube.values[:, :36, :39])
