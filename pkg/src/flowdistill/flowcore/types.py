"""Core value types: images, flow fields and frame pairs.

All types are immutable after construction (backing arrays are marked
read-only) and therefore safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class ImageFrame:
    """Grayscale or RGB raster with float samples in [0, 1].

    data has shape (height, width, channels), channels in {1, 3}.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) image data, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite samples")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("image samples outside [0, 1]")
        self.data = _freeze(a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_gray(self) -> "ImageFrame":
        """Rec.601 luma conversion; no-op for single-channel frames."""
        if self.channels == 1:
            return self
        luma = self.data @ np.array([0.299, 0.587, 0.114])
        return ImageFrame(np.clip(luma, 0.0, 1.0))


@dataclass(eq=False)
class FlowField:
    """Dense 2-channel pixel displacement map.

    Positive u points rightward, positive v downward.  Components are
    (height, width) arrays and must be finite everywhere.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u/v must be matching 2-D arrays, got {u.shape} vs {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow contains non-finite components")
        self.u = _freeze(u)
        self.v = _freeze(v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def as_array(self) -> np.ndarray:
        """Stacked (H, W, 2) view copy, u then v."""
        return np.stack([self.u, self.v], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    @staticmethod
    def zeros(height: int, width: int) -> "FlowField":
        return FlowField(np.zeros((height, width)), np.zeros((height, width)))

    @staticmethod
    def from_array(uv: np.ndarray) -> "FlowField":
        uv = np.asarray(uv)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ValueError(f"expected (H, W, 2) array, got {uv.shape}")
        return FlowField(uv[..., 0], uv[..., 1])


@dataclass(eq=False)
class FramePair:
    """Two frames of identical geometry, the unit the flow models consume."""

    first: ImageFrame
    second: ImageFrame

    def __post_init__(self):
        a, b = self.first, self.second
        if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
            raise ValueError(
                f"frame pair mismatch: {a.width}x{a.height}x{a.channels} vs "
                f"{b.width}x{b.height}x{b.channels}"
            )

    @property
    def width(self) -> int:
        return self.first.width

    @property
    def height(self) -> int:
        return self.first.height

    @property
    def channels(self) -> int:
        return self.first.channels
