"""ADAM training loop and checkpointed evaluation.

One training run owns its model and optimizer state and is single-threaded;
evaluation is read-only and may fan out over cubes (capped by the
SSR3D_THREADS environment variable).
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tape, Tensor5
from .checkpoint import save_checkpoint
from .data import (
    HsiCube,
    augment,
    bicubic_resize,
    compute_mean,
    crop_to_multiple,
    degrade,
    extract_patches,
    mean_subtract,
)
from .errors import ConfigError, TrainingError
from .losses import LOSS_FUNCTIONS
from .metrics import MetricsReport, metrics_report
from .model import Ssrnet, SsrnetConfig


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_period_epochs: int = 35
    decay_factor: float = 0.5
    epochs: int = 100
    batch_size: int = 16
    loss_kind: str = "l1"
    seed: int = 0
    patches_per_image: int = 24
    patch_hw: int = 32
    augment_data: bool = True
    flips: bool = True
    rotations: bool = True
    scales: tuple = (1.0, 0.75, 0.5)
    grad_clip: float | None = None

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in (0,1), got {self.beta1}/{self.beta2}")
        if self.lr0 <= 0.0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not (0.0 < self.decay_factor < 1.0):
            raise ConfigError(f"decay_factor must lie in (0,1), got {self.decay_factor}")
        if self.epochs < 1 or self.batch_size < 1 or self.decay_period_epochs < 1:
            raise ConfigError("epochs, batch_size and decay_period_epochs must be >= 1")
        if self.loss_kind not in LOSS_FUNCTIONS:
            raise ConfigError(
                f"loss_kind must be one of {sorted(LOSS_FUNCTIONS)}, got {self.loss_kind!r}")


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Stepwise decay: lr0 * factor^(epoch // period)."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return config.lr0 * config.decay_factor ** (epoch // config.decay_period_epochs)


class AdamOptimizer:
    """Standard ADAM with bias-corrected moments over a parameter store."""

    def __init__(self, store, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.store = store
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.t = 0
        self._m = {name: (np.zeros_like(p.weight), np.zeros_like(p.bias))
                   for name, p in store.items()}
        self._v = {name: (np.zeros_like(p.weight), np.zeros_like(p.bias))
                   for name, p in store.items()}

    def _update(self, value, grad, m, v, lr):
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * grad * grad
        m_hat = m / (1.0 - self.beta1**self.t)
        v_hat = v / (1.0 - self.beta2**self.t)
        value -= lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def step(self, lr: float):
        self.t += 1
        for name, p in self.store.items():
            for grad in (p.weight_grad, p.bias_grad):
                if not np.all(np.isfinite(grad)):
                    raise TrainingError(f"non-finite gradient in layer {name!r}")
            mw, mb = self._m[name]
            vw, vb = self._v[name]
            with np.errstate(over="ignore"):
                self._update(p.weight, p.weight_grad, mw, vw, lr)
                self._update(p.bias, p.bias_grad, mb, vb, lr)
            # grad^2 can overflow while the gradient itself is still finite
            if not (np.all(np.isfinite(vw)) and np.all(np.isfinite(vb))):
                raise TrainingError(f"optimizer state overflow in layer {name!r}")


def clip_gradients(store, max_norm: float):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in store.values():
        total += float((p.weight_grad * p.weight_grad).sum())
        total += float((p.bias_grad * p.bias_grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in store.values():
            p.weight_grad *= factor
            p.bias_grad *= factor
    return norm


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class TrainResult:
    model: Ssrnet
    mean: float
    history: list = field(default_factory=list)  # rows (epoch, step, lr, loss)
    checkpoint_path: str | None = None
    loss_csv_path: str | None = None


def _epoch_samples(cubes, cfg: TrainConfig, scale: int, epoch: int):
    """Patch sampling -> augmentation -> degradation happens per epoch per cube."""
    pairs = []
    for ci, cube in enumerate(cubes):
        ps = extract_patches(cube, cfg.patches_per_image, cfg.patch_hw,
                             seed=_derived_seed(cfg.seed, epoch, ci),
                             source_id=f"cube{ci}", scale=scale)
        if cfg.augment_data:
            ps = augment(ps, flips=cfg.flips, rotations=cfg.rotations, scales=cfg.scales)
        for p in ps:
            pairs.append((degrade(p.values, scale), p.values))
    return pairs


def _batches(pairs, cfg: TrainConfig, epoch: int):
    """Seed-shuffled batches, grouped by LR shape so samples stack cleanly."""
    rng = np.random.default_rng(_derived_seed(cfg.seed, 7919, epoch))
    order = rng.permutation(len(pairs))
    buckets: dict[tuple, list] = {}
    for idx in order:
        lr_arr, _ = pairs[idx]
        bucket = buckets.setdefault(lr_arr.shape, [])
        bucket.append(pairs[idx])
        if len(bucket) == cfg.batch_size:
            yield bucket
            buckets[lr_arr.shape] = []
    for shape, bucket in buckets.items():
        if bucket:
            yield bucket


def train(model_config: SsrnetConfig, train_config: TrainConfig, cubes,
          out_dir=None) -> TrainResult:
    """Minimize the configured loss over degraded patch pairs.

    Writes a loss CSV and periodic checkpoints when out_dir is given; fully
    reproducible from the seed.  A non-finite loss aborts the run, leaving
    the last periodic checkpoint on disk.
    """
    cubes = list(cubes)
    cfg = train_config
    model = Ssrnet.create(model_config, seed=cfg.seed)
    mean = compute_mean(cubes)
    optimizer = AdamOptimizer(model.store, cfg.beta1, cfg.beta2, cfg.epsilon)
    loss_fn = LOSS_FUNCTIONS[cfg.loss_kind]
    scale = model_config.scale

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model=model, mean=mean)
    step = 0
    try:
        for epoch in range(cfg.epochs):
            lr = lr_at(epoch, cfg)
            pairs = _epoch_samples(cubes, cfg, scale, epoch)
            for batch in _batches(pairs, cfg, epoch):
                lr_t = Tensor5(np.stack([p[0] for p in batch])[:, None].astype(np.float64) - mean)
                hr_t = Tensor5(np.stack([p[1] for p in batch])[:, None].astype(np.float64) - mean)
                with Tape() as tape:
                    loss = loss_fn(model.forward_tensor(lr_t), hr_t)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss {value} at epoch {epoch} step {step}")
                model.zero_grad()
                tape.backward(loss)
                if cfg.grad_clip is not None:
                    clip_gradients(model.store, cfg.grad_clip)
                optimizer.step(lr)
                result.history.append((epoch, step, lr, value))
                step += 1
            if out is not None and (epoch + 1) % cfg.decay_period_epochs == 0:
                save_checkpoint(out / f"checkpoint_epoch{epoch + 1:04d}.ssrc", model, mean)
    finally:
        if out is not None and result.history:
            result.loss_csv_path = str(out / "loss.csv")
            with open(result.loss_csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "step", "lr", "loss"])
                for row in result.history:
                    writer.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    if out is not None:
        result.checkpoint_path = str(out / "checkpoint.ssrc")
        save_checkpoint(result.checkpoint_path, model, mean)
    return result


# ---------------------------------------------------------------------------
# evaluation

def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SSR3D_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class EvalRow:
    cube_id: str
    network: MetricsReport
    bicubic: MetricsReport


@dataclass
class EvalResult:
    rows: list
    aggregate: MetricsReport
    metrics_csv_path: str | None = None


def write_pgm(path, values: np.ndarray):
    """8-bit binary portable graymap."""
    arr = np.ascontiguousarray(values, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def _export_error_maps(sr: HsiCube, hr: HsiCube, out: Path, cube_id: str):
    """One PGM per band of |SR - HR|, linearly scaled; scales go to a sidecar."""
    err = np.abs(sr.values.astype(np.float64) - hr.values.astype(np.float64))
    sidecar_lines = []
    for b in range(err.shape[0]):
        peak_err = float(err[b].max())
        scale = 255.0 / peak_err if peak_err > 0 else 0.0
        name = f"{cube_id}_errmap_band{b:03d}.pgm"
        write_pgm(out / name, np.clip(np.round(err[b] * scale), 0, 255))
        sidecar_lines.append(f"{name} {scale!r}")
    sidecar = out / f"{cube_id}_errmap_scale.txt"
    sidecar.write_text(
        "# pgm_value / scale = absolute error\n" + "\n".join(sidecar_lines) + "\n")
    return err


def _export_spectrum(sr: HsiCube, hr: HsiCube, pixel, out: Path, cube_id: str):
    row, col = pixel
    path = out / f"{cube_id}_spectrum_r{row}_c{col}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["band", "hr", "sr"])
        for b in range(hr.bands):
            writer.writerow([b, repr(float(hr.values[b, row, col])),
                             repr(float(sr.values[b, row, col]))])
    return path


def super_resolve(model: Ssrnet, lr_cube: HsiCube, mean: float) -> HsiCube:
    """Subtract the training mean, run the network, add the mean back."""
    x = Tensor5(lr_cube.values[None, None].astype(np.float64) - mean)
    out = model.forward_tensor(x)
    return HsiCube((out.data[0, 0] + mean).astype(np.float32))


def evaluate(model: Ssrnet, mean: float, cubes, cube_ids=None, out_dir=None,
             crop: int = 512, peak: float = 1.0, error_maps: bool = False,
             spectrum=None, render_figures: bool = False) -> EvalResult:
    """Degrade each cube's top-left crop, reconstruct, and score against the crop.

    Emits a metrics CSV (network and bicubic-baseline columns) plus optional
    per-band error maps and a spectral curve for one pixel.
    """
    cubes = list(cubes)
    if cube_ids is None:
        cube_ids = [f"cube{idx}" for idx in range(len(cubes))]
    scale = model.config.scale
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def score(args):
        cube_id, cube = args
        hr = crop_to_multiple(cube, crop, scale)
        lr = bicubic_resize(hr, hr.height // scale, hr.width // scale)
        sr = super_resolve(model, lr, mean)
        baseline = bicubic_resize(lr, hr.height, hr.width)
        row = EvalRow(cube_id=cube_id,
                      network=metrics_report(sr, hr, peak),
                      bicubic=metrics_report(baseline, hr, peak))
        return row, hr, sr

    jobs = list(zip(cube_ids, cubes))
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score, jobs))
    else:
        scored = [score(j) for j in jobs]

    rows = []
    for row, hr, sr in scored:
        rows.append(row)
        if out is not None and error_maps:
            err = _export_error_maps(sr, hr, out, row.cube_id)
            if render_figures:
                from . import figures
                figures.save_error_map_figure(err, out / f"{row.cube_id}_errmap.png")
        if out is not None and spectrum is not None:
            r, c = spectrum
            if not (0 <= r < hr.height and 0 <= c < hr.width):
                raise ConfigError(f"spectrum pixel {spectrum} outside crop {hr.shape}")
            _export_spectrum(sr, hr, spectrum, out, row.cube_id)
            if render_figures:
                from . import figures
                figures.save_spectral_figure(
                    hr.values[:, r, c], sr.values[:, r, c], (r, c),
                    out / f"{row.cube_id}_spectrum_r{r}_c{c}.png")

    aggregate = MetricsReport(
        psnr=float(np.mean([r.network.psnr for r in rows])),
        ssim=float(np.mean([r.network.ssim for r in rows])),
        sam=float(np.mean([r.network.sam for r in rows])))
    result = EvalResult(rows=rows, aggregate=aggregate)

    if out is not None:
        result.metrics_csv_path = str(out / "metrics.csv")
        with open(result.metrics_csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cube", "psnr", "ssim", "sam",
                             "psnr_bicubic", "ssim_bicubic", "sam_bicubic"])
            for r in rows:
                writer.writerow([r.cube_id, repr(r.network.psnr), repr(r.network.ssim),
                                 repr(r.network.sam), repr(r.bicubic.psnr),
                                 repr(r.bicubic.ssim), repr(r.bicubic.sam)])
            writer.writerow(["mean", repr(aggregate.psnr), repr(aggregate.ssim),
                             repr(aggregate.sam), "", "", ""])
    return result
