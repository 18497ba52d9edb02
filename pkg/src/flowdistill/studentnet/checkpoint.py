"""Versioned binary checkpoints: explicit little-endian header, config,
then a named parameter table of float64 payloads.  Round trips are
bit-exact.

Layout (all little-endian):
  magic    4s   b"FDCK"
  version  u32  1
  input_channels, base_width, levels  u32 each
  seed     i64
  n_params u32
  per parameter, in param_shapes order:
    name_len u16, name utf-8, ndim u8, dims u32 * ndim, data f8 * prod(dims)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import NetConfig, StudentNet, param_shapes

MAGIC = b"FDCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(net: StudentNet, path) -> None:
    cfg = net.config
    chunks = [
        MAGIC,
        struct.pack("<IIIIqI", VERSION, cfg.input_channels, cfg.base_width,
                    cfg.levels, cfg.seed, len(net.params)),
    ]
    for name in param_shapes(cfg):
        p = net.params[name]
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", p.ndim))
        chunks.append(struct.pack(f"<{p.ndim}I", *p.shape))
        chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_config: NetConfig | None = None) -> StudentNet:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    version, in_ch, width, levels, seed, n_params = r.unpack("<IIIIqI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    config = NetConfig(input_channels=in_ch, base_width=width, levels=levels, seed=seed)
    if expected_config is not None and (
        expected_config.input_channels, expected_config.base_width, expected_config.levels
    ) != (in_ch, width, levels):
        raise CheckpointError(
            f"{path}: checkpoint config {config} does not match expected {expected_config}"
        )
    shapes = param_shapes(config)
    if n_params != len(shapes):
        raise CheckpointError(
            f"{path}: {n_params} stored parameters, architecture needs {len(shapes)}"
        )
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        if name not in shapes:
            raise CheckpointError(f"{path}: unknown parameter {name!r}")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        if dims != shapes[name]:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {dims}, "
                f"architecture needs {shapes[name]}"
            )
        size = int(np.prod(dims))
        data = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(dims)
        params[name] = data.astype(np.float64)
    missing = set(shapes) - set(params)
    if missing:
        raise CheckpointError(f"{path}: missing parameters {sorted(missing)}")
    if r.pos != len(r.raw):
        raise CheckpointError(f"{path}: trailing bytes after parameter table")
    return StudentNet(config, params)
