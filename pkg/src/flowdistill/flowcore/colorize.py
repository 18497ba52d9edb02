"""Flow-to-color rendering with the standard 55-entry Middlebury wheel.

Hue encodes direction, saturation encodes magnitude; zero flow maps to
white.  Default magnitude normalization uses the field's 99th-percentile
magnitude so specular-highlight outliers do not wash the rest out.
"""
from __future__ import annotations

import numpy as np

from .types import FlowField, ImageFrame


def make_color_wheel() -> np.ndarray:
    """55x3 RGB table in [0, 1], spanning RY/YG/GC/CB/BM/MR sectors."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    wheel[col:col + RY, 0] = 1.0
    wheel[col:col + RY, 1] = np.arange(RY) / RY
    col += RY
    wheel[col:col + YG, 0] = 1.0 - np.arange(YG) / YG
    wheel[col:col + YG, 1] = 1.0
    col += YG
    wheel[col:col + GC, 1] = 1.0
    wheel[col:col + GC, 2] = np.arange(GC) / GC
    col += GC
    wheel[col:col + CB, 1] = 1.0 - np.arange(CB) / CB
    wheel[col:col + CB, 2] = 1.0
    col += CB
    wheel[col:col + BM, 2] = 1.0
    wheel[col:col + BM, 0] = np.arange(BM) / BM
    col += BM
    wheel[col:col + MR, 2] = 1.0 - np.arange(MR) / MR
    wheel[col:col + MR, 0] = 1.0
    return wheel


_WHEEL = make_color_wheel()


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> ImageFrame:
    mag = flow.magnitude()
    if max_magnitude is None:
        max_magnitude = float(np.percentile(mag, 99.0))
    if max_magnitude <= 0.0:
        # degenerate all-zero field: all white
        return ImageFrame(np.ones((flow.height, flow.width, 3)))
    rad = np.clip(mag / max_magnitude, 0.0, 1.0)
    ncols = len(_WHEEL)
    angle = np.mod(np.arctan2(flow.v, flow.u), 2.0 * np.pi)
    fk = angle / (2.0 * np.pi) * ncols
    k0 = np.floor(fk).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    f = (fk - np.floor(fk))[..., None]
    col = (1.0 - f) * _WHEEL[k0] + f * _WHEEL[k1]
    rgb = 1.0 - rad[..., None] * (1.0 - col)
    return ImageFrame(np.clip(rgb, 0.0, 1.0))
