"""Quantitative measures: endpoint error, SSIM, the multi-scale L1
training loss, and boxplot statistics for per-test-set reporting.

EPE and EPE* share one implementation; the star just means the reference
argument is teacher gold truth instead of real ground truth.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .flowcore import FlowField, ImageFrame

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


# ---------------------------------------------------------------------------
# endpoint error


def _check_dims(pred: FlowField, ref: FlowField):
    if (pred.height, pred.width) != (ref.height, ref.width):
        raise ValueError(
            f"flow dims {pred.width}x{pred.height} vs {ref.width}x{ref.height}"
        )


def epe_map(pred: FlowField, ref: FlowField, border: int = 0) -> np.ndarray:
    """Per-pixel Euclidean norm of the displacement difference.

    border > 0 excludes that many pixels on each side from the map.
    """
    _check_dims(pred, ref)
    m = np.hypot(pred.u - ref.u, pred.v - ref.v)
    if border > 0:
        m = m[border:-border, border:-border]
    return m


def epe_mean(pred: FlowField, ref: FlowField, border: int = 0) -> float:
    return float(np.mean(epe_map(pred, ref, border=border)))


# ---------------------------------------------------------------------------
# SSIM


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 'valid'-mode correlation with a 1-D kernel on both axes."""
    size = len(kernel)
    out = sliding_window_view(img, size, axis=0) @ kernel
    out = sliding_window_view(out, size, axis=1) @ kernel
    return out


def ssim(a: ImageFrame, b: ImageFrame) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), L = 1.

    RGB inputs are converted to luma first.  Result lies in [-1, 1].
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(f"frame dims {a.width}x{a.height} vs {b.width}x{b.height}")
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ValueError(
            f"frames {a.width}x{a.height} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    x = a.to_gray().data[:, :, 0]
    y = b.to_gray().data[:, :, 0]
    k = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _filter_valid(x, k)
    mu_y = _filter_valid(y, k)
    var_x = np.maximum(_filter_valid(x * x, k) - mu_x * mu_x, 0.0)
    var_y = np.maximum(_filter_valid(y * y, k) - mu_y * mu_y, 0.0)
    cov = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.clip(np.mean(num / den), -1.0, 1.0))


# ---------------------------------------------------------------------------
# multi-scale L1 loss


@dataclass(eq=False)
class MultiScaleFlow:
    """Pyramid of flow predictions, coarsest to finest, dyadic size chain.

    Displacement values are stored in finest-scale pixel units at every
    level.
    """

    levels: list[FlowField]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("MultiScaleFlow needs at least one level")
        for lo, hi in zip(self.levels, self.levels[1:]):
            if (lo.width * 2, lo.height * 2) != (hi.width, hi.height):
                raise ValueError(
                    f"broken dyadic chain: {lo.width}x{lo.height} then {hi.width}x{hi.height}"
                )

    @property
    def finest(self) -> FlowField:
        return self.levels[-1]


def downsample_area(a: np.ndarray, factor: int) -> np.ndarray:
    """Area-average 2-D downsampling by an integer factor."""
    h, w = a.shape
    if h % factor or w % factor:
        raise ValueError(f"{w}x{h} not divisible by factor {factor}")
    return a.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def multiscale_l1_loss(pred: MultiScaleFlow, gold: FlowField, weights: list[float]) -> float:
    """Weighted sum over scales of the mean per-pixel L1 flow error.

    At each level the gold flow is area-averaged down and both sides are
    taken in that level's local pixel units (displacements divided by the
    downsampling factor), so every term is resolution-comparable.
    """
    finest = pred.finest
    if (gold.height, gold.width) != (finest.height, finest.width):
        raise ValueError(
            f"gold {gold.width}x{gold.height} does not match finest scale "
            f"{finest.width}x{finest.height}"
        )
    if len(weights) != len(pred.levels):
        raise ValueError(f"{len(weights)} weights for {len(pred.levels)} scales")
    total = 0.0
    for level, weight in zip(pred.levels, weights):
        factor = gold.width // level.width
        gu = downsample_area(gold.u, factor)
        gv = downsample_area(gold.v, factor)
        term = (np.mean(np.abs(level.u - gu)) + np.mean(np.abs(level.v - gv))) / factor
        total += weight * term
    return float(total)


# ---------------------------------------------------------------------------
# boxplot statistics (Tukey-style, inclusive quartiles)


@dataclass
class BoxplotStats:
    median: float
    lower_quartile: float
    upper_quartile: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]
    n: int

    def as_dict(self) -> dict:
        return {
            "median": self.median,
            "lower_quartile": self.lower_quartile,
            "upper_quartile": self.upper_quartile,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "outliers": list(self.outliers),
            "n": self.n,
        }


def _median_sorted(xs: np.ndarray) -> float:
    n = len(xs)
    mid = n // 2
    if n % 2:
        return float(xs[mid])
    return float((xs[mid - 1] + xs[mid]) / 2.0)


def boxplot_stats(samples) -> BoxplotStats:
    """Median/quartiles by the inclusive median-of-halves convention;
    whiskers reach the most extreme data point within 1.5 IQR of the
    quartiles; anything beyond is listed as an outlier."""
    xs = np.sort(np.asarray(list(samples), dtype=np.float64))
    n = len(xs)
    if n == 0:
        raise ValueError("boxplot_stats needs at least one sample")
    median = _median_sorted(xs)
    # inclusive halves: for odd n the median element belongs to both
    lower = xs[: (n + 1) // 2]
    upper = xs[n // 2:]
    q1 = _median_sorted(lower)
    q3 = _median_sorted(upper)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = xs[(xs >= lo_fence) & (xs <= hi_fence)]
    whisker_low = float(inside[0]) if len(inside) else q1
    whisker_high = float(inside[-1]) if len(inside) else q3
    outliers = [float(x) for x in xs if x < lo_fence or x > hi_fence]
    return BoxplotStats(median, q1, q3, whisker_low, whisker_high, outliers, n)


# ---------------------------------------------------------------------------
# exports


def write_metrics_csv(rows: list[dict], path) -> None:
    """One row per test pair; column order follows the first row's keys."""
    if not rows:
        raise ValueError("no metric rows to write")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_summary(values: list[float], path, extra: dict | None = None) -> dict:
    """JSON summary per test set: mean plus the BoxplotStats fields."""
    stats = boxplot_stats(values)
    summary = {"mean": float(np.mean(values)), **stats.as_dict()}
    if extra:
        summary.update(extra)
    with open(path, "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return summary
