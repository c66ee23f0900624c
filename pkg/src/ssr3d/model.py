"""The spatial-spectral residual super-resolution network.

A trunk of D residual modules sits between a 3D-conv feature extractor and
a transposed-conv reconstruction head.  Each module holds residual units
built from separable 3D blocks (spectral kx1x1 then spatial 1xkxk, ReLU
after each), optional local feature fusion (concat + 1x1x1 conv + ReLU),
and a trailing block behind a local skip connection.  Global residual
learning re-injects the shallow features after every module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import Conv3dParams, Tensor5, add, concat_channels, conv3d, conv3d_transposed, relu
from .data import HsiCube
from .errors import ConfigError, GeometryError

BLOCK_KINDS = ("separable", "standard")


@dataclass(frozen=True)
class SsrnetConfig:
    d_modules: int = 3
    units_per_module: int = 3
    filters: int = 64
    k: int = 3
    scale: int = 2
    lff_enabled: bool = True
    grl_enabled: bool = True
    block_kind: str = "separable"

    def __post_init__(self):
        if self.d_modules < 1 or self.units_per_module < 1 or self.filters < 1:
            raise ConfigError(
                f"d_modules, units_per_module and filters must be >= 1, got "
                f"{self.d_modules}/{self.units_per_module}/{self.filters}")
        if self.k < 3 or self.k % 2 == 0:
            raise ConfigError(f"kernel size k must be odd and >= 3, got {self.k}")
        if self.scale < 2:
            raise ConfigError(f"scale factor must be >= 2, got {self.scale}")
        if self.block_kind not in BLOCK_KINDS:
            raise ConfigError(f"block_kind must be one of {BLOCK_KINDS}, got {self.block_kind!r}")


@dataclass(frozen=True)
class LayerSpec:
    """One trainable convolution in the network, derived purely from the config."""

    name: str
    kind: str  # ife | spectral | spatial | standard | pointwise-fuse | upsample | final
    group: str  # ife | units | fuse | blocks | upsample | final
    c_in: int
    c_out: int
    kernel: tuple[int, int, int]
    stride: tuple[int, int, int] = (1, 1, 1)
    padding: tuple[int, int, int] = (0, 0, 0)
    transposed: bool = False
    output_padding: tuple[int, int, int] = (0, 0, 0)

    @property
    def weight_count(self) -> int:
        return self.c_in * self.c_out * math.prod(self.kernel)

    @property
    def param_count(self) -> int:
        return self.weight_count + self.c_out


def _block_specs(prefix: str, group: str, cfg: SsrnetConfig) -> list[LayerSpec]:
    f, k, p = cfg.filters, cfg.k, cfg.k // 2
    if cfg.block_kind == "separable":
        return [
            LayerSpec(f"{prefix}.spectral", "spectral", group, f, f, (k, 1, 1), padding=(p, 0, 0)),
            LayerSpec(f"{prefix}.spatial", "spatial", group, f, f, (1, k, k), padding=(0, p, p)),
        ]
    return [LayerSpec(f"{prefix}.conv", "standard", group, f, f, (k, k, k), padding=(p, p, p))]


def plan_layers(config: SsrnetConfig) -> list[LayerSpec]:
    """Ordered trainable-layer plan; a pure function of the configuration."""
    f, k, r = config.filters, config.k, config.scale
    p = k // 2
    plan = [LayerSpec("ife", "ife", "ife", 1, f, (k, k, k), padding=(p, p, p))]
    for d in range(1, config.d_modules + 1):
        for u in range(1, config.units_per_module + 1):
            for b in (1, 2):
                plan += _block_specs(f"module{d}.unit{u}.block{b}", "units", config)
        if config.lff_enabled:
            plan.append(LayerSpec(f"module{d}.fuse", "pointwise-fuse", "fuse",
                                  config.units_per_module * f, f, (1, 1, 1)))
        plan += _block_specs(f"module{d}.block", "blocks", config)
    ph = math.ceil(r / 2)
    plan.append(LayerSpec("upsample", "upsample", "upsample", f, f, (3, 2 * r, 2 * r),
                          stride=(1, r, r), padding=(1, ph, ph), transposed=True,
                          output_padding=(0, 2 * ph - r, 2 * ph - r)))
    plan.append(LayerSpec("final", "final", "final", f, 1, (k, k, k), padding=(p, p, p)))
    return plan


def build(config: SsrnetConfig, seed: int) -> dict[str, Conv3dParams]:
    """Initialize every layer: zero bias, zero-mean weights with std sqrt(2/fan_in)."""
    rng = np.random.default_rng(seed)
    store: dict[str, Conv3dParams] = {}
    for spec in plan_layers(config):
        if spec.transposed:
            shape = (spec.c_in, spec.c_out) + spec.kernel
        else:
            shape = (spec.c_out, spec.c_in) + spec.kernel
        fan_in = spec.c_in * math.prod(spec.kernel)
        weight = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        store[spec.name] = Conv3dParams(
            weight, np.zeros(spec.c_out), stride=spec.stride, padding=spec.padding,
            transposed=spec.transposed, output_padding=spec.output_padding)
    return store


@dataclass
class ParamCountReport:
    by_group: dict[str, int] = field(default_factory=dict)
    total: int = 0
    separable_total: int = 0
    standard_total: int = 0
    ratio: float = 0.0  # separable / standard


_GROUP_ORDER = ("ife", "units", "fuse", "blocks", "upsample", "final")


def count_params(config: SsrnetConfig) -> ParamCountReport:
    """Exact trainable-scalar totals per layer group, plus both block variants."""
    report = ParamCountReport(by_group={g: 0 for g in _GROUP_ORDER})
    for spec in plan_layers(config):
        report.by_group[spec.group] += spec.param_count
        report.total += spec.param_count
    sep = sum(s.param_count for s in plan_layers(replace(config, block_kind="separable")))
    std = sum(s.param_count for s in plan_layers(replace(config, block_kind="standard")))
    report.separable_total = sep
    report.standard_total = std
    report.ratio = sep / std
    return report


# ---------------------------------------------------------------------------
# forward wiring

def block_forward(x: Tensor5, convs, kind: str) -> Tensor5:
    """Separable: relu(spatial(relu(spectral(x)))).  Standard: one conv, no activation."""
    if kind == "separable":
        return relu(conv3d(relu(conv3d(x, convs[0])), convs[1]))
    return conv3d(x, convs[0])


def unit_forward(x: Tensor5, block1_convs, block2_convs, kind: str) -> Tensor5:
    """Two blocks behind a local skip connection."""
    return add(block_forward(block_forward(x, block1_convs, kind), block2_convs, kind), x)


class Ssrnet:
    """Bundles a configuration with its parameter store and runs the forward pass."""

    def __init__(self, config: SsrnetConfig, store: dict[str, Conv3dParams]):
        self.config = config
        self.store = store

    @classmethod
    def create(cls, config: SsrnetConfig, seed: int) -> "Ssrnet":
        return cls(config, build(config, seed))

    def _block_convs(self, prefix: str):
        if self.config.block_kind == "separable":
            return (self.store[f"{prefix}.spectral"], self.store[f"{prefix}.spatial"])
        return (self.store[f"{prefix}.conv"],)

    def module_forward(self, x: Tensor5, d: int) -> Tensor5:
        cfg = self.config
        unit_outs = []
        h = x
        for u in range(1, cfg.units_per_module + 1):
            h = unit_forward(h,
                             self._block_convs(f"module{d}.unit{u}.block1"),
                             self._block_convs(f"module{d}.unit{u}.block2"),
                             cfg.block_kind)
            unit_outs.append(h)
        if cfg.lff_enabled:
            fused = relu(conv3d(concat_channels(unit_outs), self.store[f"module{d}.fuse"]))
        else:
            fused = unit_outs[-1]
        return block_forward(add(fused, x), self._block_convs(f"module{d}.block"), cfg.block_kind)

    def forward_tensor(self, x: Tensor5) -> Tensor5:
        """(n, 1, l, h, w) -> (n, 1, l, scale*h, scale*w)."""
        cfg = self.config
        if x.shape[2] < cfg.k or x.shape[3] < cfg.k or x.shape[4] < cfg.k:
            raise GeometryError(
                f"input {x.shape[2:]} smaller than kernel {cfg.k} on some axis")
        f0 = conv3d(x, self.store["ife"])
        h = f0
        for d in range(1, cfg.d_modules + 1):
            h = self.module_forward(h, d)
            if cfg.grl_enabled:
                h = add(h, f0)
        up = conv3d_transposed(h, self.store["upsample"])
        return conv3d(up, self.store["final"])

    def forward(self, i_lr: HsiCube) -> HsiCube:
        """Run one cube through the network: unsqueeze, trunk + head, squeeze."""
        x = Tensor5(i_lr.values[None, None].astype(np.float64))
        out = self.forward_tensor(x)
        return HsiCube(out.data[0, 0].astype(np.float32))

    def num_params(self) -> int:
        return sum(p.num_params() for p in self.store.values())

    def zero_grad(self):
        for p in self.store.values():
            p.zero_grad()
