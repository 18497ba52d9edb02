"""Lossless 8/16-bit raster I/O, normalized to float samples in [0, 1]."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .types import ImageFrame


class ImageIOError(ValueError):
    pass


def read_image(path) -> ImageFrame:
    path = Path(path)
    if not path.exists():
        raise ImageIOError(f"{path}: no such file")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"{path}: unreadable or corrupt raster file")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"{path}: unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        data = raw[:, :, None].astype(np.float64)
    elif raw.ndim == 3 and raw.shape[2] == 3:
        data = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB).astype(np.float64)
    else:
        raise ImageIOError(f"{path}: unsupported channel layout {raw.shape}")
    return ImageFrame(data / scale)


def write_image(frame: ImageFrame, path, bit_depth: int = 8) -> None:
    if bit_depth == 8:
        dtype, scale = np.uint8, 255.0
    elif bit_depth == 16:
        dtype, scale = np.uint16, 65535.0
    else:
        raise ImageIOError(f"unsupported bit depth {bit_depth}")
    quant = np.rint(frame.data * scale).astype(dtype)
    if frame.channels == 3:
        quant = cv2.cvtColor(quant, cv2.COLOR_RGB2BGR)
    else:
        quant = quant[:, :, 0]
    if not cv2.imwrite(str(path), quant):
        raise ImageIOError(f"{path}: write failed")
