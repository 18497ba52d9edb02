"""Middlebury .flo reader/writer.

Layout: 4-byte little-endian float magic 202021.25, then width and height
as 32-bit little-endian signed ints, then row-major interleaved (u, v)
32-bit little-endian floats.  Round trips are byte-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .types import FlowField

FLO_MAGIC = 202021.25
_HEADER = struct.Struct("<fii")


class FloError(ValueError):
    """Base class for .flo parsing failures."""


class FloFormatError(FloError):
    """Wrong magic number."""


class FloCorruptError(FloError):
    """Payload truncated or trailing garbage."""


class FloDimensionError(FloError):
    """Non-positive stored dimensions."""


def read_flo(path) -> FlowField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FloCorruptError(f"{path}: file shorter than .flo header")
    magic, width, height = _HEADER.unpack_from(raw)
    if magic != np.float32(FLO_MAGIC):
        raise FloFormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if width <= 0 or height <= 0:
        raise FloDimensionError(f"{path}: non-positive dimensions {width}x{height}")
    expected = _HEADER.size + 8 * width * height
    if len(raw) != expected:
        raise FloCorruptError(
            f"{path}: expected {expected} bytes for {width}x{height}, got {len(raw)}"
        )
    uv = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(height, width, 2)
    return FlowField(uv[..., 0], uv[..., 1])


def write_flo(flow: FlowField, path) -> None:
    # FlowField already forbids NaN/Inf; re-check so a tampered array can
    # never reach disk.
    if not (np.all(np.isfinite(flow.u)) and np.all(np.isfinite(flow.v))):
        raise ValueError("refusing to write non-finite flow")
    uv = np.empty((flow.height, flow.width, 2), dtype="<f4")
    uv[..., 0] = flow.u
    uv[..., 1] = flow.v
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FLO_MAGIC, flow.width, flow.height))
        f.write(uv.tobytes())
