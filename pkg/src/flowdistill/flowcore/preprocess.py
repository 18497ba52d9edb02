"""Center-crop preprocessing so frame geometry fits dyadic architectures."""
from __future__ import annotations

import numpy as np

from .types import FlowField, ImageFrame


def crop_center(obj, height: int, width: int):
    """Center crop an ImageFrame or FlowField to (height, width)."""
    if height > obj.height or width > obj.width:
        raise ValueError(
            f"crop {width}x{height} exceeds input {obj.width}x{obj.height}"
        )
    y0 = (obj.height - height) // 2
    x0 = (obj.width - width) // 2
    if isinstance(obj, ImageFrame):
        return ImageFrame(obj.data[y0:y0 + height, x0:x0 + width])
    if isinstance(obj, FlowField):
        return FlowField(
            obj.u[y0:y0 + height, x0:x0 + width],
            obj.v[y0:y0 + height, x0:x0 + width],
        )
    raise TypeError(f"cannot crop {type(obj).__name__}")


def crop_to_multiple(obj, m: int):
    """Center crop so both dimensions become multiples of m; idempotent."""
    if m <= 0:
        raise ValueError(f"multiple must be positive, got {m}")
    if obj.width < m or obj.height < m:
        raise ValueError(
            f"input {obj.width}x{obj.height} smaller than multiple {m}"
        )
    new_h = (obj.height // m) * m
    new_w = (obj.width // m) * m
    if (new_h, new_w) == (obj.height, obj.width):
        return obj
    return crop_center(obj, new_h, new_w)
