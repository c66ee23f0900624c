"""Architecture wiring: plans, counts, residual structure, shape contracts."""

import numpy as np
import pytest

from ssr3d import Conv3dParams, GeometryError, Tape, Tensor5, conv3d
from ssr3d.data import HsiCube
from ssr3d.losses import l1_loss
from ssr3d.model import (
    Ssrnet,
    SsrnetConfig,
    block_forward,
    build,
    count_params,
    plan_layers,
    unit_forward,
)
from helpers import conv3d_oracle

PAPER_CONFIG = SsrnetConfig(d_modules=3, units_per_module=3, filters=64, k=3, scale=2)


def zeroed(model: Ssrnet, prefixes) -> Ssrnet:
    for name, p in model.store.items():
        if any(name.startswith(pre) for pre in prefixes):
            p.weight[...] = 0.0
            p.bias[...] = 0.0
    return model


class TestPlanAndBuild:
    def test_reference_config_total(self):
        assert count_params(PAPER_CONFIG).total == 1_272_129

    def test_standard_variant_total(self):
        from dataclasses import replace
        assert count_params(replace(PAPER_CONFIG, block_kind="standard")).total == 2_561_025

    def test_separable_to_standard_ratio(self):
        r = count_params(PAPER_CONFIG)
        assert r.ratio == pytest.approx(0.4967, abs=5e-4)
        assert 0.49 <= r.ratio <= 0.505

    def test_minimal_plan_structure(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=1, scale=2)
        names = [s.name for s in plan_layers(cfg)]
        assert names == [
            "ife",
            "module1.unit1.block1.spectral", "module1.unit1.block1.spatial",
            "module1.unit1.block2.spectral", "module1.unit1.block2.spatial",
            "module1.fuse",
            "module1.block.spectral", "module1.block.spatial",
            "upsample", "final",
        ]

    def test_build_is_seed_deterministic(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=4, scale=2)
        a = build(cfg, seed=5)
        b = build(cfg, seed=5)
        assert a.keys() == b.keys()
        for name in a:
            assert np.array_equal(a[name].weight, b[name].weight)
            assert np.array_equal(a[name].bias, b[name].bias)
        c = build(cfg, seed=6)
        assert not np.array_equal(a["ife"].weight, c["ife"].weight)

    def test_zero_bias_and_fan_in_scale(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=32, scale=2)
        store = build(cfg, seed=0)
        for p in store.values():
            assert np.all(p.bias == 0.0)
        w = store["module1.unit1.block1.spatial"].weight  # fan_in = 32*9
        assert w.std() == pytest.approx(np.sqrt(2.0 / (32 * 9)), rel=0.15)

    def test_lff_toggle_weight_difference(self):
        from dataclasses import replace
        cfg = SsrnetConfig(d_modules=2, units_per_module=3, filters=8, scale=2)
        on = plan_layers(cfg)
        off = plan_layers(replace(cfg, lff_enabled=False))
        diff = sum(s.weight_count for s in on) - sum(s.weight_count for s in off)
        assert diff == cfg.d_modules * 3 * cfg.filters * cfg.filters

    def test_count_monotonicity(self):
        from dataclasses import replace
        cfg = SsrnetConfig(d_modules=2, units_per_module=2, filters=6, scale=3)
        assert count_params(replace(cfg, lff_enabled=False)).total < count_params(cfg).total
        r = count_params(cfg)
        assert r.separable_total < r.standard_total


class TestBlocksAndUnits:
    def setup_method(self):
        self.cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=3, scale=2)
        self.rng = np.random.default_rng(0)

    def test_zero_block_outputs_zero_both_kinds(self):
        from dataclasses import replace
        for kind in ("separable", "standard"):
            model = Ssrnet.create(replace(self.cfg, block_kind=kind), seed=1)
            zeroed(model, ["module1.unit1.block1"])
            x = Tensor5(self.rng.standard_normal((1, 3, 4, 5, 5)))
            out = block_forward(x, model._block_convs("module1.unit1.block1"), kind)
            assert np.array_equal(out.data, np.zeros_like(out.data))

    def test_block_preserves_shape(self):
        model = Ssrnet.create(self.cfg, seed=2)
        for dims in ((3, 5, 7), (4, 3, 3), (8, 6, 4)):
            x = Tensor5(self.rng.standard_normal((1, 3) + dims))
            out = block_forward(x, model._block_convs("module1.block"), "separable")
            assert out.shape == x.shape

    def test_zero_unit_is_identity(self):
        model = Ssrnet.create(self.cfg, seed=3)
        zeroed(model, ["module1.unit1"])
        x = Tensor5(self.rng.standard_normal((1, 3, 4, 4, 4)))
        out = unit_forward(x, model._block_convs("module1.unit1.block1"),
                           model._block_convs("module1.unit1.block2"), "separable")
        assert np.array_equal(out.data, x.data)

    def test_separable_block_matches_rank1_standard_kernel(self):
        # positive input, weights and zero bias keep both ReLUs inactive
        rng = np.random.default_rng(9)
        k = 3
        u = rng.uniform(0.1, 1.0, k)            # spectral taps
        v = rng.uniform(0.1, 1.0, (k, k))       # spatial taps
        spectral = Conv3dParams(u.reshape(1, 1, k, 1, 1), np.zeros(1), padding=(1, 0, 0))
        spatial = Conv3dParams(v.reshape(1, 1, 1, k, k), np.zeros(1), padding=(0, 1, 1))
        x = Tensor5(rng.uniform(0.1, 1.0, (1, 1, 5, 6, 6)))
        got = block_forward(x, (spectral, spatial), "separable")
        rank1 = np.einsum("a,bc->abc", u, v).reshape(1, 1, k, k, k)
        want = conv3d_oracle(x.data, rank1, np.zeros(1), (1, 1, 1), (1, 1, 1))
        assert np.max(np.abs(got.data - want)) <= 1e-9

    def test_linear_cascade_matches_composed_kernel(self):
        # raw two-stage linear cascade over multiple channels
        rng = np.random.default_rng(10)
        k, ci, cm, co = 3, 2, 3, 2
        spec_w = rng.standard_normal((cm, ci, k, 1, 1))
        spat_w = rng.standard_normal((co, cm, 1, k, k))
        x = Tensor5(rng.standard_normal((1, ci, 4, 6, 6)))
        mid = conv3d(x, Conv3dParams(spec_w, np.zeros(cm), padding=(1, 0, 0)))
        got = conv3d(mid, Conv3dParams(spat_w, np.zeros(co), padding=(0, 1, 1)))
        composed = np.einsum("omjk,mca->ocajk", spat_w[:, :, 0], spec_w[:, :, :, 0, 0])
        want = conv3d_oracle(x.data, composed, np.zeros(co), (1, 1, 1), (1, 1, 1))
        assert np.max(np.abs(got.data - want)) <= 1e-9


class TestModuleWiring:
    def test_zero_module_outputs_zero_with_lff(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=3, filters=2, scale=2)
        model = Ssrnet.create(cfg, seed=4)
        zeroed(model, ["module1"])
        x = Tensor5(np.random.default_rng(1).standard_normal((1, 2, 4, 4, 4)))
        out = model.module_forward(x, 1)
        assert np.array_equal(out.data, np.zeros_like(out.data))

    def test_fuse_consumes_all_unit_channels(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=3, filters=5, scale=2)
        fuse = [s for s in plan_layers(cfg) if s.kind == "pointwise-fuse"]
        assert len(fuse) == 1 and fuse[0].c_in == 15 and fuse[0].c_out == 5

    def test_grl_reinjects_shallow_features(self):
        # zero all module weights: each module emits zeros, so the trunk
        # carries exactly the shallow features into the head
        cfg = SsrnetConfig(d_modules=2, units_per_module=2, filters=3, scale=2)
        model = Ssrnet.create(cfg, seed=5)
        zeroed(model, ["module1", "module2"])
        x = Tensor5(np.random.default_rng(2).standard_normal((1, 1, 4, 5, 5)))
        f0 = conv3d(x, model.store["ife"])
        h = model.module_forward(f0, 1)
        assert np.array_equal(h.data, np.zeros_like(h.data))
        full = model.forward_tensor(x)
        # reference: run head directly on f0
        from ssr3d import conv3d_transposed
        want = conv3d(conv3d_transposed(f0, model.store["upsample"]), model.store["final"])
        assert np.array_equal(full.data, want.data)


class TestForwardContracts:
    @pytest.mark.parametrize("bands", [8, 16, 31])
    @pytest.mark.parametrize("scale", [2, 3, 4])
    def test_band_and_shape_preservation(self, bands, scale):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=2, scale=scale)
        model = Ssrnet.create(cfg, seed=0)
        cube = HsiCube(np.random.default_rng(0).random((bands, 8, 8), dtype=np.float32))
        out = model.forward(cube)
        assert out.shape == (bands, 8 * scale, 8 * scale)

    def test_known_shape_example(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=2, scale=2)
        model = Ssrnet.create(cfg, seed=0)
        cube = HsiCube(np.random.default_rng(3).random((31, 16, 16), dtype=np.float32))
        assert model.forward(cube).shape == (31, 32, 32)

    def test_input_smaller_than_kernel_raises(self):
        cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=2, scale=2)
        model = Ssrnet.create(cfg, seed=0)
        with pytest.raises(GeometryError):
            model.forward(HsiCube(np.zeros((2, 8, 8), dtype=np.float32)))

    def test_forward_is_deterministic(self):
        cfg = SsrnetConfig(d_modules=2, units_per_module=2, filters=3, scale=2)
        model = Ssrnet.create(cfg, seed=7)
        cube = HsiCube(np.random.default_rng(4).random((5, 8, 8), dtype=np.float32))
        a = model.forward(cube)
        b = model.forward(cube)
        assert np.array_equal(a.values, b.values)

    @pytest.mark.parametrize("kind", ["separable", "standard"])
    @pytest.mark.parametrize("lff,grl", [(True, True), (False, False)])
    def test_gradient_reaches_every_parameter(self, kind, lff, grl):
        cfg = SsrnetConfig(d_modules=2, units_per_module=2, filters=3, scale=2,
                           lff_enabled=lff, grl_enabled=grl, block_kind=kind)
        model = Ssrnet.create(cfg, seed=11)
        rng = np.random.default_rng(12)
        x = Tensor5(rng.random((1, 1, 5, 6, 6)))
        target = Tensor5(rng.random((1, 1, 5, 12, 12)))
        with Tape() as tape:
            loss = l1_loss(model.forward_tensor(x), target)
        tape.backward(loss)
        for name, p in model.store.items():
            assert np.any(p.weight_grad != 0.0), f"zero weight gradient in {name}"
            assert np.any(p.bias_grad != 0.0), f"zero bias gradient in {name}"
