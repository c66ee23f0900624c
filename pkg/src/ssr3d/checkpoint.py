"""Model checkpoints: "SSRC" magic, version, config block, named float32
parameter entries, CRC32 trailer.  Everything is little-endian."""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError
from .model import Ssrnet, SsrnetConfig, build

SSRC_MAGIC = b"SSRC"
SSRC_VERSION = 1
_KIND_CODE = {"separable": 0, "standard": 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def _pack_config(cfg: SsrnetConfig, mean: float) -> bytes:
    return struct.pack(
        "<HHHHHBBBd",
        cfg.d_modules, cfg.units_per_module, cfg.filters, cfg.k, cfg.scale,
        int(cfg.lff_enabled), int(cfg.grl_enabled), _KIND_CODE[cfg.block_kind],
        float(mean))


def _unpack_config(blob: bytes, off: int):
    d, u, f, k, r, lff, grl, kind, mean = struct.unpack_from("<HHHHHBBBd", blob, off)
    if kind not in _KIND_NAME:
        raise FormatError(f"unknown block kind code {kind} at byte offset {off + 12}")
    cfg = SsrnetConfig(d_modules=d, units_per_module=u, filters=f, k=k, scale=r,
                       lff_enabled=bool(lff), grl_enabled=bool(grl),
                       block_kind=_KIND_NAME[kind])
    return cfg, mean, off + struct.calcsize("<HHHHHBBBd")


def _entries(store):
    for name, params in store.items():
        yield f"{name}.weight", params.weight
        yield f"{name}.bias", params.bias


def save_checkpoint(path, model: Ssrnet, mean: float = 0.0):
    """Write config plus every parameter array as float32."""
    parts = [SSRC_MAGIC, struct.pack("<H", SSRC_VERSION),
             _pack_config(model.config, mean)]
    entries = list(_entries(model.store))
    parts.append(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path):
    """Read a checkpoint; returns (model, training_mean)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10:
        raise FormatError(f"file too short for a checkpoint header ({len(blob)} bytes)")
    if blob[:4] != SSRC_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r} at byte offset 0, expected {SSRC_MAGIC!r}")
    crc_off = len(blob) - 4
    (crc,) = struct.unpack_from("<I", blob, crc_off)
    if crc != zlib.crc32(blob[:crc_off]):
        raise FormatError(f"CRC32 mismatch in trailer at byte offset {crc_off}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != SSRC_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    cfg, mean, off = _unpack_config(blob, 6)

    # fresh store with the right geometry, then overwrite values
    store = build(cfg, seed=0)
    (n_entries,) = struct.unpack_from("<I", blob, off)
    off += 4
    expected = dict(_entries(store))
    seen = set()
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(dims))
        if off + 4 * count > crc_off:
            raise FormatError(f"entry {name!r} payload overruns file at byte offset {off}")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        if name not in expected:
            raise FormatError(f"unexpected entry {name!r} for this configuration")
        target = expected[name]
        if tuple(dims) != target.shape:
            raise FormatError(
                f"entry {name!r} has dims {tuple(dims)}, plan expects {target.shape}")
        target[...] = values.reshape(dims).astype(np.float64)
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise FormatError(f"checkpoint is missing entries: {sorted(missing)[:3]} ...")
    if off != crc_off:
        raise FormatError(f"{crc_off - off} trailing bytes before CRC at byte offset {off}")
    return Ssrnet(cfg, store), mean
