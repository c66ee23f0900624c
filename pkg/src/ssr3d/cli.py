"""Command-line interface: train, eval, ablate, params, gradcheck, synth.

Every run with an output directory writes exactly one manifest.txt there.
A manifest doubles as a config file (`key = value` lines, # comments), so
`ssr3d <command> --config <manifest>` re-executes the run; with the same
seed all numeric outputs are reproduced bit-identically.  Explicit flags
override config-file values, which override built-in defaults.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import SYNTH_KINDS, read_hsc, synth_cube, write_hsc
from .errors import ConfigError, Ssr3dError
from .model import SsrnetConfig, count_params
from .trainer import TrainConfig, evaluate, train

SYNTH_ALIASES = {"blobs": "gaussian-blobs", "ramps": "spectral-ramps", "checker": "checker"}
TRAIN_SPLIT = 0.8
ABLATION_ORDER = [("LFF0GRL0", False, False), ("LFF1GRL0", True, False),
                  ("LFF0GRL1", False, True), ("LFF1GRL1", True, True)]


# ---------------------------------------------------------------------------
# key = value config files and manifests

def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


def _parse_spectrum(text: str):
    try:
        row, col = (int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"expected ROW,COL, got {text!r}") from None
    return row, col


# key -> parser; every command declares which keys it understands
KEY_PARSERS = {
    "seed": int,
    "scale": int,
    "filters": int,
    "modules": int,
    "units": int,
    "block": str,
    "lff": _parse_bool,
    "grl": _parse_bool,
    "loss": str,
    "data": str,
    "synth": str,
    "epochs": int,
    "batch_size": int,
    "patches": int,
    "patch_size": int,
    "lr0": float,
    "beta1": float,
    "beta2": float,
    "epsilon": float,
    "decay_period": int,
    "decay_factor": float,
    "augment": _parse_bool,
    "grad_clip": float,
    "checkpoint": str,
    "crop": int,
    "peak": float,
    "error_maps": _parse_bool,
    "spectrum": _parse_spectrum,
    "figures": _parse_bool,
    "csv": str,
}

COMMAND_KEYS = {
    "train": ["seed", "scale", "filters", "modules", "units", "block", "lff", "grl",
              "loss", "data", "synth", "epochs", "batch_size", "patches", "patch_size",
              "lr0", "beta1", "beta2", "epsilon", "decay_period", "decay_factor",
              "augment", "grad_clip", "figures"],
    "eval": ["seed", "scale", "checkpoint", "data", "synth", "crop", "peak",
             "error_maps", "spectrum", "figures"],
    "ablate": ["seed", "scale", "filters", "modules", "units", "block", "loss",
               "data", "synth", "epochs", "batch_size", "patches", "patch_size",
               "lr0", "beta1", "beta2", "epsilon", "decay_period", "decay_factor",
               "augment", "grad_clip", "crop", "peak", "figures"],
    "params": ["scale", "filters", "modules", "units", "lff", "grl", "csv", "figures"],
    "gradcheck": ["seed"],
    "synth": ["seed", "synth"],
}

DEFAULTS = {
    "seed": 0, "scale": 2, "filters": 64, "modules": 3, "units": 3,
    "block": "separable", "lff": True, "grl": True, "loss": "l1",
    "data": None, "synth": None, "epochs": 100, "batch_size": 16,
    "patches": 24, "patch_size": 32, "lr0": 1e-4, "beta1": 0.9, "beta2": 0.999,
    "epsilon": 1e-8, "decay_period": 35, "decay_factor": 0.5, "augment": True,
    "grad_clip": None, "checkpoint": None, "crop": 512, "peak": 1.0,
    "error_maps": False, "spectrum": None, "figures": True, "csv": None,
}


def load_config_file(path, allowed) -> dict:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
        text = text.strip()
        values[key] = None if text == "none" else KEY_PARSERS[key](text)
    return values


def resolve_settings(args, command: str) -> tuple[dict, set]:
    """Defaults, overridden by config-file values, overridden by explicit flags.

    Also returns the set of keys that were explicitly provided.
    """
    keys = COMMAND_KEYS[command]
    settings = {k: DEFAULTS[k] for k in keys}
    explicit = set()
    if getattr(args, "config", None):
        file_values = load_config_file(args.config, set(keys))
        settings.update(file_values)
        explicit |= set(file_values)
    for key in keys:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            settings[key] = KEY_PARSERS[key](flag_value) if isinstance(flag_value, str) \
                and KEY_PARSERS[key] is not str else flag_value
            explicit.add(key)
    return settings, explicit


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, tuple):
        return ",".join(str(p) for p in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(out: Path, command: str, settings: dict, artifacts):
    lines = ["# ssr3d run manifest",
             f"# command: {command}",
             f"# version: {__version__}"]
    lines += [f"# artifact: {name}" for name in artifacts]
    lines += [f"{key} = {_format_value(settings[key])}" for key in sorted(settings)]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# dataset plumbing

def parse_synth_spec(spec: str):
    """kind:BANDSxHxW[:n=COUNT], e.g. blobs:8x64x64:n=4"""
    parts = spec.split(":")
    if len(parts) < 2:
        raise ConfigError(f"synth spec {spec!r} needs kind:BANDSxHxW[:n=N]")
    kind = SYNTH_ALIASES.get(parts[0], parts[0])
    if kind not in SYNTH_KINDS:
        raise ConfigError(
            f"unknown synth kind {parts[0]!r}; use one of {sorted(SYNTH_ALIASES)}")
    try:
        bands, height, width = (int(d) for d in parts[1].split("x"))
    except ValueError:
        raise ConfigError(f"bad dims in synth spec {spec!r}, expected BANDSxHxW") from None
    count = 1
    for extra in parts[2:]:
        if extra.startswith("n="):
            count = int(extra[2:])
        else:
            raise ConfigError(f"unknown synth spec part {extra!r}")
    if count < 1:
        raise ConfigError(f"synth count must be >= 1, got {count}")
    return kind, bands, height, width, count


def load_dataset(settings) -> tuple[list, list]:
    """Returns (cubes, ids) from --data or --synth."""
    if settings.get("data"):
        root = Path(settings["data"])
        paths = sorted(root.glob("*.hsc"))
        if not paths:
            raise ConfigError(f"no .hsc files found in {root}")
        return [read_hsc(p) for p in paths], [p.stem for p in paths]
    if settings.get("synth"):
        kind, bands, h, w, count = parse_synth_spec(settings["synth"])
        seed = settings.get("seed", 0)
        cubes = [synth_cube(kind, bands, h, w, seed=seed + i) for i in range(count)]
        return cubes, [f"{kind}_{i:03d}" for i in range(count)]
    raise ConfigError("either --data or --synth is required")


def split_dataset(cubes, ids, seed):
    """Seeded 80/20 train/test split."""
    order = np.random.default_rng([seed, 80, 20]).permutation(len(cubes))
    n_train = max(1, int(round(TRAIN_SPLIT * len(cubes))))

    def pick(idx):
        return [cubes[i] for i in idx], [ids[i] for i in idx]

    return pick(sorted(order[:n_train])), pick(sorted(order[n_train:]))


def _model_config(settings) -> SsrnetConfig:
    return SsrnetConfig(
        d_modules=settings["modules"], units_per_module=settings["units"],
        filters=settings["filters"], scale=settings["scale"],
        lff_enabled=settings.get("lff", True), grl_enabled=settings.get("grl", True),
        block_kind=settings.get("block", "separable"))


def _train_config(settings) -> TrainConfig:
    return TrainConfig(
        lr0=settings["lr0"], beta1=settings["beta1"], beta2=settings["beta2"],
        epsilon=settings["epsilon"], decay_period_epochs=settings["decay_period"],
        decay_factor=settings["decay_factor"], epochs=settings["epochs"],
        batch_size=settings["batch_size"], loss_kind=settings["loss"],
        seed=settings["seed"], patches_per_image=settings["patches"],
        patch_hw=settings["patch_size"], augment_data=settings["augment"],
        grad_clip=settings["grad_clip"])


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    settings, _ = resolve_settings(args, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cubes, ids = load_dataset(settings)
    (train_cubes, train_ids), (test_cubes, test_ids) = split_dataset(
        cubes, ids, settings["seed"])
    (out / "train_cubes.txt").write_text("\n".join(train_ids) + "\n")
    (out / "test_cubes.txt").write_text("\n".join(test_ids) + ("\n" if test_ids else ""))

    result = train(_model_config(settings), _train_config(settings), train_cubes, out)
    artifacts = ["loss.csv", "checkpoint.ssrc", "train_cubes.txt", "test_cubes.txt"]
    if settings["figures"]:
        from . import figures
        figures.save_loss_curve(result.history, out / "loss_curve.png")
        artifacts.append("loss_curve.png")
    write_manifest(out, "train", settings, artifacts)
    final = result.history[-1][3] if result.history else float("nan")
    print(f"trained {settings['epochs']} epoch(s), {len(result.history)} step(s); "
          f"final loss {final:.6g}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    settings, explicit = resolve_settings(args, "eval")
    if not settings["checkpoint"]:
        raise ConfigError("eval needs --checkpoint")
    from .checkpoint import load_checkpoint

    model, mean = load_checkpoint(settings["checkpoint"])
    if "scale" in explicit and settings["scale"] != model.config.scale:
        raise ConfigError(
            f"requested scale {settings['scale']} but checkpoint was trained "
            f"for scale {model.config.scale}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cubes, ids = load_dataset(settings)
    result = evaluate(model, mean, cubes, cube_ids=ids, out_dir=out,
                      crop=settings["crop"], peak=settings["peak"],
                      error_maps=settings["error_maps"], spectrum=settings["spectrum"],
                      render_figures=settings["figures"])
    write_manifest(out, "eval", settings, ["metrics.csv"])
    print(f"{'cube':16s} {'psnr':>8s} {'ssim':>8s} {'sam':>8s} "
          f"{'psnr_bi':>8s} {'ssim_bi':>8s} {'sam_bi':>8s}")
    for row in result.rows:
        print(f"{row.cube_id:16s} {row.network.psnr:8.3f} {row.network.ssim:8.4f} "
              f"{row.network.sam:8.3f} {row.bicubic.psnr:8.3f} "
              f"{row.bicubic.ssim:8.4f} {row.bicubic.sam:8.3f}")
    agg = result.aggregate
    print(f"{'mean':16s} {agg.psnr:8.3f} {agg.ssim:8.4f} {agg.sam:8.3f}")
    return 0


def cmd_ablate(args) -> int:
    settings, _ = resolve_settings(args, "ablate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cubes, ids = load_dataset(settings)
    (train_cubes, _), (test_cubes, test_ids) = split_dataset(cubes, ids, settings["seed"])
    if not test_cubes:  # single-cube datasets are evaluated on the training cube
        test_cubes, test_ids = train_cubes, ["train0"]

    rows = []
    histories = {}
    for label, lff, grl in ABLATION_ORDER:
        cfg = replace(_model_config(settings), lff_enabled=lff, grl_enabled=grl)
        sub = out / label
        result = train(cfg, _train_config(settings), train_cubes, sub)
        ev = evaluate(result.model, result.mean, test_cubes, cube_ids=test_ids,
                      out_dir=None, crop=settings["crop"], peak=settings["peak"])
        rows.append((label, lff, grl, ev.aggregate, count_params(cfg).total))
        histories[label] = result.history

    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "lff", "grl", "psnr", "ssim", "sam", "params"])
        for label, lff, grl, agg, n_params in rows:
            writer.writerow([label, int(lff), int(grl), repr(agg.psnr),
                             repr(agg.ssim), repr(agg.sam), n_params])
    artifacts = ["ablation.csv"] + [f"{label}/loss.csv" for label, _, _ in ABLATION_ORDER]
    if settings["figures"]:
        from . import figures
        figures.save_ablation_curves(histories, out / "ablation_convergence.png")
        artifacts.append("ablation_convergence.png")
    write_manifest(out, "ablate", settings, artifacts)

    print(f"{'config':10s} {'LFF':>4s} {'GRL':>4s} {'psnr':>8s} {'ssim':>8s} "
          f"{'sam':>8s} {'params':>9s}")
    for label, lff, grl, agg, n_params in rows:
        mark = lambda flag: "yes" if flag else "no"
        print(f"{label:10s} {mark(lff):>4s} {mark(grl):>4s} {agg.psnr:8.3f} "
              f"{agg.ssim:8.4f} {agg.sam:8.3f} {n_params:9d}")
    return 0


def cmd_params(args) -> int:
    settings, _ = resolve_settings(args, "params")
    cfg = _model_config(settings)
    sep = count_params(replace(cfg, block_kind="separable"))
    std = count_params(replace(cfg, block_kind="standard"))
    print(f"{'group':10s} {'separable':>12s} {'standard':>12s}")
    for group in sep.by_group:
        print(f"{group:10s} {sep.by_group[group]:12d} {std.by_group[group]:12d}")
    print(f"{'total':10s} {sep.total:12d} {std.total:12d}")
    print(f"separable/standard ratio: {sep.total / std.total:.4f}")
    rows = [["group", "separable", "standard"]]
    rows += [[g, sep.by_group[g], std.by_group[g]] for g in sep.by_group]
    rows += [["total", sep.total, std.total],
             ["ratio", repr(sep.total / std.total), ""]]
    if settings["csv"]:
        with open(settings["csv"], "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "params.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        artifacts = ["params.csv"]
        if settings["figures"]:
            from . import figures
            figures.save_param_count_figure(sep.by_group, std.by_group,
                                            out / "params.png")
            artifacts.append("params.png")
        write_manifest(out, "params", settings, artifacts)
    return 0


def cmd_gradcheck(args) -> int:
    settings, _ = resolve_settings(args, "gradcheck")
    from .gradcheck import run_all

    rows = run_all(seed=settings["seed"], corrupt=args.inject_bad)
    print(f"{'op':20s} {'max_rel_err':>12s} {'tolerance':>10s} {'status':>7s}")
    for row in rows:
        status = "pass" if row.passed else "FAIL"
        print(f"{row.name:20s} {row.max_rel_err:12.3e} {row.tolerance:10.0e} {status:>7s}")
    failed = [row.name for row in rows if not row.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "gradcheck.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["op", "max_rel_err", "tolerance", "passed"])
            for row in rows:
                writer.writerow([row.name, repr(row.max_rel_err),
                                 repr(row.tolerance), int(row.passed)])
        write_manifest(out, "gradcheck", settings, ["gradcheck.csv"])
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    settings, _ = resolve_settings(args, "synth")
    if not settings["synth"]:
        raise ConfigError("synth needs --synth KIND:BANDSxHxW[:n=N]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind, bands, h, w, count = parse_synth_spec(settings["synth"])
    names = []
    for i in range(count):
        cube = synth_cube(kind, bands, h, w, seed=settings["seed"] + i)
        name = f"{kind}_{i:03d}.hsc"
        write_hsc(cube, out / name)
        names.append(name)
    write_manifest(out, "synth", settings, names)
    print(f"wrote {count} cube(s) of {bands}x{h}x{w} to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_model_flags(p, include_block=True, include_toggles=True):
    p.add_argument("--scale", type=int, choices=[2, 3, 4], default=None,
                   help="spatial upsampling factor")
    p.add_argument("--filters", type=int, default=None, help="channel width")
    p.add_argument("--modules", type=int, default=None, help="residual module count D")
    p.add_argument("--units", type=int, default=None, help="residual units per module")
    if include_block:
        p.add_argument("--block", choices=["separable", "standard"], default=None,
                       help="block convolution variant")
    if include_toggles:
        p.add_argument("--lff", choices=["on", "off"], default=None,
                       help="local feature fusion")
        p.add_argument("--grl", choices=["on", "off"], default=None,
                       help="global residual learning")


def _add_train_flags(p):
    p.add_argument("--loss", choices=["l1", "mse", "combo"], default=None)
    p.add_argument("--data", default=None, help="directory of .hsc cubes")
    p.add_argument("--synth", default=None, help="synthetic dataset spec KIND:BxHxW[:n=N]")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--patches", type=int, default=None, help="patches per cube per epoch")
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--lr0", type=float, default=None, help="initial learning rate")
    p.add_argument("--decay-period", type=int, default=None,
                   help="epochs between learning-rate halvings")
    p.add_argument("--decay-factor", type=float, default=None)
    p.add_argument("--augment", choices=["on", "off"], default=None)
    p.add_argument("--grad-clip", type=float, default=None)


def _add_common(p, default_out=None):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", default=default_out,
                   help="output directory" + (f" (default: {default_out})"
                                              if default_out else ""))
    p.add_argument("--figures", choices=["on", "off"], default=None,
                   help="render PNG figures next to CSV outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssr3d",
        description="Spatial-spectral residual hyperspectral super-resolution toolkit")
    parser.add_argument("--version", action="version", version=f"ssr3d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on cubes or synthetic data")
    _add_common(p, default_out="runs/train")
    _add_model_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint against cubes")
    _add_common(p, default_out="runs/eval")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--scale", type=int, choices=[2, 3, 4], default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--synth", default=None)
    p.add_argument("--crop", type=int, default=None,
                   help="top-left evaluation crop size (default 512, "
                        "clamped to the cube)")
    p.add_argument("--peak", type=float, default=None)
    p.add_argument("--error-maps", dest="error_maps", action="store_const", const=True,
                   default=None, help="write per-band absolute-error maps")
    p.add_argument("--spectrum", type=str, default=None, metavar="ROW,COL",
                   help="export the spectral curve at one pixel")

    p = sub.add_parser("ablate", help="run the four LFF/GRL combinations")
    _add_common(p, default_out="runs/ablate")
    _add_model_flags(p, include_toggles=False)
    _add_train_flags(p)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--peak", type=float, default=None)

    p = sub.add_parser("params", help="parameter counts for both block variants")
    _add_common(p)
    _add_model_flags(p, include_block=False)
    p.add_argument("--csv", default=None, help="also write the table to this CSV path")

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op")
    _add_common(p)
    p.add_argument("--inject-bad", dest="inject_bad", default=None, metavar="OP",
                   help="test mode: corrupt the named op's gradient")

    p = sub.add_parser("synth", help="generate synthetic cubes as .hsc files")
    _add_common(p, default_out="runs/synth")
    p.add_argument("--synth", default=None, help="KIND:BANDSxHxW[:n=N]")

    return parser


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "params": cmd_params,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ssr3d {args.command}: {exc}", file=sys.stderr)
        return 2
    except Ssr3dError as exc:
        print(f"ssr3d {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ssr3d {args.command}: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())
