"""Synthetic scene generator with exact ground-truth flow.

Each sequence renders a fixed high-resolution base texture through an
accumulated analytic warp per frame (never chained image resampling, so
no blur accumulates), and the inter-frame ground-truth flow is evaluated
from the analytic maps.  Illumination effects are applied after warping,
so ground truth never depends on photometry.

Regimes mirror the four challenge classes: rotation, scale change,
sparse texture with drifting (respiratory-like) translation, and
nonrigid deformation from moving Gaussian displacement bumps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .flowcore import FlowField, ImageFrame
from .distill.dataset import SequenceDataset, split_dataset

REGIMES = ("rotation", "scale", "sparse", "deformation")


class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    size: tuple[int, int] = (256, 192)  # (width, height)
    frames: int = 221
    seed: int = 0
    # texture: dense-perlin | sparse-blobs | tissue-like
    texture: str = "dense-perlin"
    texture_density: float = 0.002     # blobs per pixel, sparse-blobs only
    texture_octaves: int = 4
    # motion: rotation | scale | translation | deformation | composite
    motion: str = "rotation"
    profile: str = "linear"            # linear | loop (returns to identity)
    osc_period: float | None = None    # loop period in frames; default: whole sequence
    rotation_deg_per_frame: float = 1.0
    scale_per_frame: float = 1.002
    translation_px: tuple[float, float] = (0.5, 0.0)
    bump_amplitude: float = 2.5        # px, deformation only
    bump_sigma: float = 18.0           # px
    n_bumps: int = 4
    # illumination: none | vignette | gain-ramp | specular
    illumination: str = "none"
    vignette_strength: float = 0.5
    gain_per_frame: float = 0.997
    specular_count: int = 3
    specular_radius: float = 8.0
    specular_intensity: float = 0.6

    def __post_init__(self):
        if self.frames < 2:
            raise SceneSpecError(f"need at least 2 frames, got {self.frames}")
        if self.motion not in ("rotation", "scale", "translation", "deformation", "composite"):
            raise SceneSpecError(f"unknown motion {self.motion!r}")
        if self.texture not in ("dense-perlin", "sparse-blobs", "tissue-like"):
            raise SceneSpecError(f"unknown texture {self.texture!r}")
        if self.illumination not in ("none", "vignette", "gain-ramp", "specular"):
            raise SceneSpecError(f"unknown illumination {self.illumination!r}")
        if self.profile not in ("linear", "loop"):
            raise SceneSpecError(f"unknown profile {self.profile!r}")


# ---------------------------------------------------------------------------
# textures


def _value_noise(rng, height: int, width: int, octaves: int) -> np.ndarray:
    """Octave sum of smoothed white noise, normalized to [0.05, 0.95]."""
    out = np.zeros((height, width))
    sigma = min(height, width) / 8.0
    amp = 1.0
    for _ in range(octaves):
        out += amp * gaussian_filter(rng.standard_normal((height, width)), sigma)
        sigma = max(sigma / 2.0, 0.6)
        amp *= 0.55
    out -= out.min()
    peak = out.max()
    if peak > 0:
        out /= peak
    return 0.05 + 0.9 * out


def make_texture(spec: SceneSpec, height: int, width: int) -> np.ndarray:
    rng = np.random.default_rng((spec.seed, 0xBA5E))
    if spec.texture == "dense-perlin":
        return _value_noise(rng, height, width, spec.texture_octaves)
    if spec.texture == "tissue-like":
        base = _value_noise(rng, height, width, spec.texture_octaves)
        # mild horizontal anisotropy, loosely fibrous
        return np.clip(0.7 * base + 0.3 * gaussian_filter(base, (0.8, 4.0)), 0.0, 1.0)
    # sparse-blobs: a few small bright spots on a flat background
    tex = np.full((height, width), 0.3)
    n_blobs = max(1, int(round(spec.texture_density * height * width)))
    ys, xs = np.mgrid[0:height, 0:width]
    for _ in range(n_blobs):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        sigma = rng.uniform(0.8, 1.6)
        amp = rng.uniform(0.25, 0.55) * rng.choice([-1.0, 1.0])
        r2 = (ys - cy) ** 2 + (xs - cx) ** 2
        mask = r2 < (4.0 * sigma) ** 2  # truncate far tails, keeps texture sparse
        tex[mask] += amp * np.exp(-r2[mask] / (2.0 * sigma ** 2))
    return np.clip(tex, 0.02, 0.98)


# ---------------------------------------------------------------------------
# motion models
#
# Each motion defines psi_n mapping frame-n coordinates to frame-0 (base)
# coordinates, plus its exact inverse.  The inter-frame ground truth is
# w_n(x) = psi_{n+1}^{-1}(psi_n(x)) - x.


class _Motion:
    def psi(self, n, xs, ys):
        raise NotImplementedError

    def psi_inv(self, n, xs, ys):
        raise NotImplementedError


@dataclass
class _Similarity(_Motion):
    """Rotation + scale + translation about a fixed center. theta_fn /
    scale_fn / trans_fn give cumulative parameters per frame index."""

    center: tuple[float, float]
    theta_fn: object
    scale_fn: object
    trans_fn: object

    def psi(self, n, xs, ys):
        cx, cy = self.center
        th, s = self.theta_fn(n), self.scale_fn(n)
        tx, ty = self.trans_fn(n)
        dx, dy = xs - cx - tx, ys - cy - ty
        c, si = math.cos(th), math.sin(th)
        return (cx + (c * dx + si * dy) / s, cy + (-si * dx + c * dy) / s)

    def psi_inv(self, n, xs, ys):
        cx, cy = self.center
        th, s = self.theta_fn(n), self.scale_fn(n)
        tx, ty = self.trans_fn(n)
        dx, dy = (xs - cx) * s, (ys - cy) * s
        c, si = math.cos(th), math.sin(th)
        return (cx + tx + c * dx - si * dy, cy + ty + si * dx + c * dy)


@dataclass
class _Deformation(_Motion):
    """Gaussian displacement bumps with drifting centers and oscillating
    amplitudes; psi_n(x) = x + D_n(x).  Bounded amplitude keeps the map a
    contraction, so the fixed-point inverse converges to machine precision."""

    centers: np.ndarray     # (J, 2) initial (x, y)
    drifts: np.ndarray      # (J, 2) px/frame
    amps: np.ndarray        # (J, 2) displacement vector per bump
    periods: np.ndarray     # (J,)
    phases: np.ndarray      # (J,)
    sigma: float
    loop_frames: int | None = None  # force sin(2 pi n / N) time profile

    def _field(self, n, xs, ys):
        du = np.zeros_like(xs)
        dv = np.zeros_like(ys)
        for j in range(len(self.centers)):
            if self.loop_frames:
                t = math.sin(2.0 * math.pi * n / self.loop_frames)
            else:
                t = math.sin(2.0 * math.pi * n / self.periods[j] + self.phases[j])
            cx = self.centers[j, 0] + self.drifts[j, 0] * n
            cy = self.centers[j, 1] + self.drifts[j, 1] * n
            g = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * self.sigma ** 2))
            du += t * self.amps[j, 0] * g
            dv += t * self.amps[j, 1] * g
        return du, dv

    def psi(self, n, xs, ys):
        du, dv = self._field(n, xs, ys)
        return xs + du, ys + dv

    def psi_inv(self, n, xs, ys):
        # solve y + D_n(y) = x by fixed point; contraction since
        # |amp| << sigma
        px, py = xs.copy(), ys.copy()
        for _ in range(40):
            du, dv = self._field(n, px, py)
            nx, ny = xs - du, ys - dv
            delta = max(np.max(np.abs(nx - px)), np.max(np.abs(ny - py)))
            px, py = nx, ny
            if delta < 1e-12:
                break
        return px, py


def _cumulative(spec: SceneSpec, rate: float):
    if spec.profile == "loop":
        period = spec.osc_period or (spec.frames - 1)
        return lambda n: rate * math.sin(2.0 * math.pi * n / period)
    return lambda n: rate * n


def build_motion(spec: SceneSpec) -> _Motion:
    w, h = spec.size
    center = (w / 2.0, h / 2.0)
    zero2 = lambda n: (0.0, 0.0)
    one = lambda n: 1.0
    zero = lambda n: 0.0
    if spec.motion == "rotation":
        theta = _cumulative(spec, math.radians(spec.rotation_deg_per_frame))
        return _Similarity(center, theta, one, zero2)
    if spec.motion == "scale":
        if spec.profile == "loop":
            period = spec.osc_period or (spec.frames - 1)
            log_s = math.log(spec.scale_per_frame)
            scale = lambda n: math.exp(log_s * math.sin(2.0 * math.pi * n / period))
        else:
            scale = lambda n: spec.scale_per_frame ** n
        return _Similarity(center, zero, scale, zero2)
    if spec.motion == "translation":
        tx, ty = spec.translation_px
        fx = _cumulative(spec, tx)
        fy = _cumulative(spec, ty)
        return _Similarity(center, zero, one, lambda n: (fx(n), fy(n)))
    if spec.motion == "deformation":
        rng = np.random.default_rng((spec.seed, 0xDEF0))
        j = spec.n_bumps
        # keep bump centers inside the frame even when sigma is large
        # relative to the frame
        mx = min(2.0 * spec.bump_sigma, (w - 1) / 2.0)
        my = min(2.0 * spec.bump_sigma, (h - 1) / 2.0)
        centers = np.stack([
            rng.uniform(mx, w - mx, j),
            rng.uniform(my, h - my, j),
        ], axis=1)
        drifts = rng.uniform(-0.08, 0.08, (j, 2))
        angles = rng.uniform(0, 2 * math.pi, j)
        amps = spec.bump_amplitude * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        if spec.bump_amplitude > 0.45 * spec.bump_sigma:
            raise SceneSpecError(
                "bump amplitude too large relative to sigma; map not invertible"
            )
        return _Deformation(
            centers=centers,
            drifts=drifts,
            amps=amps,
            periods=rng.uniform(40.0, 80.0, j),
            phases=rng.uniform(0, 2 * math.pi, j),
            sigma=spec.bump_sigma,
            loop_frames=(spec.frames - 1) if spec.profile == "loop" else None,
        )
    # composite: smoothly wandering similarity transform, varied motion
    # across pairs -- the "generic" pre-training domain
    rng = np.random.default_rng((spec.seed, 0xC0E0))
    ax, ay = rng.uniform(4.0, 9.0, 2)
    px, py = rng.uniform(25.0, 60.0, 2)
    phx, phy = rng.uniform(0, 2 * math.pi, 2)
    th_amp = math.radians(rng.uniform(0.5, 1.5))
    th_p = rng.uniform(40.0, 90.0)
    s_amp = rng.uniform(0.005, 0.02)
    s_p = rng.uniform(40.0, 90.0)
    return _Similarity(
        center,
        theta_fn=lambda n: th_amp * math.sin(2 * math.pi * n / th_p),
        scale_fn=lambda n: math.exp(s_amp * math.sin(2 * math.pi * n / s_p)),
        trans_fn=lambda n: (
            ax * math.sin(2 * math.pi * n / px + phx),
            ay * math.sin(2 * math.pi * n / py + phy),
        ),
    )


# ---------------------------------------------------------------------------
# illumination (applied after warping; never affects ground truth)


def apply_illumination(spec: SceneSpec, img: np.ndarray, n: int) -> np.ndarray:
    if spec.illumination == "none":
        return img
    h, w = img.shape
    if spec.illumination == "vignette":
        ys, xs = np.mgrid[0:h, 0:w]
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        r2 = ((xs - cx) / cx) ** 2 + ((ys - cy) / cy) ** 2
        return img * (1.0 - spec.vignette_strength * np.clip(r2, 0.0, 1.0))
    if spec.illumination == "gain-ramp":
        return np.clip(img * spec.gain_per_frame ** n, 0.0, 1.0)
    # specular: additive clipped Gaussian spots moving independently of the
    # flow, deliberately flow-inconsistent like real glossy highlights
    rng = np.random.default_rng((spec.seed, 0x5EC, 0))
    out = img.copy()
    ys, xs = np.mgrid[0:h, 0:w]
    for k in range(spec.specular_count):
        x0 = rng.uniform(0.15 * w, 0.85 * w)
        y0 = rng.uniform(0.15 * h, 0.85 * h)
        vx = rng.uniform(-1.5, 1.5)
        vy = rng.uniform(-1.5, 1.5)
        cx = x0 + vx * n
        cy = y0 + vy * n
        r2 = (xs - cx) ** 2 + (ys - cy) ** 2
        out += spec.specular_intensity * np.exp(-r2 / (2.0 * spec.specular_radius ** 2))
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# generation


def _sample_base(tex: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = tex.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = xs - x0
    wy = ys - y0
    top = tex[y0, x0] * (1 - wx) + tex[y0, x1] * wx
    bot = tex[y1, x0] * (1 - wx) + tex[y1, x1] * wx
    return top * (1 - wy) + bot * wy


def generate_sequence(spec: SceneSpec) -> tuple[list[ImageFrame], list[FlowField]]:
    """Render the frames and the exact inter-frame ground-truth flows."""
    w, h = spec.size
    motion = build_motion(spec)
    xs, ys = np.mgrid[0:h, 0:w][::-1].astype(np.float64)

    # margin: how far any frame's sampling coordinates leave the frame
    max_reach = 0.0
    for n in range(spec.frames):
        px, py = motion.psi(n, xs, ys)
        reach = max(
            float(np.max(np.maximum(-px, px - (w - 1)))),
            float(np.max(np.maximum(-py, py - (h - 1)))),
        )
        max_reach = max(max_reach, reach)
    margin = int(math.ceil(max(max_reach, 0.0))) + 4

    tex = make_texture(spec, h + 2 * margin, w + 2 * margin)

    frames: list[ImageFrame] = []
    gt_flows: list[FlowField] = []
    min_dim = min(w, h)
    for n in range(spec.frames):
        px, py = motion.psi(n, xs, ys)
        img = _sample_base(tex, px + margin, py + margin)
        img = apply_illumination(spec, img, n)
        frames.append(ImageFrame(np.clip(img, 0.0, 1.0)))
        if n < spec.frames - 1:
            qx, qy = motion.psi_inv(n + 1, px, py)
            fu, fv = qx - xs, qy - ys
            max_disp = float(np.max(np.hypot(fu, fv)))
            if max_disp > 0.1 * min_dim:
                raise SceneSpecError(
                    f"per-frame displacement {max_disp:.1f}px exceeds 10% of the "
                    f"frame; too few pixels stay source-visible"
                )
            gt_flows.append(FlowField(fu, fv))
    return frames, gt_flows


def dataset_from_spec(spec: SceneSpec, name: str = "") -> SequenceDataset:
    frames, gt = generate_sequence(spec)
    return SequenceDataset(
        frames=frames,
        gt_flows=gt,
        name=name or f"{spec.motion}-{spec.seed}",
        provenance=(
            f"synthetic motion={spec.motion} texture={spec.texture} "
            f"illumination={spec.illumination} seed={spec.seed}"
        ),
    )


def regime_spec(regime: str, seed: int, size=(256, 192), frames: int = 221,
                illumination: str = "none") -> SceneSpec:
    """SceneSpec for one of the four challenge regimes, the generic
    pre-training domain, or the loop sequence used for drift studies."""
    common = dict(size=size, frames=frames, illumination=illumination)
    if regime == "rotation":
        return SceneSpec(seed=seed, motion="rotation", texture="dense-perlin",
                         rotation_deg_per_frame=0.8, **common)
    if regime == "scale":
        return SceneSpec(seed=seed + 1, motion="scale", texture="dense-perlin",
                         scale_per_frame=1.0015, **common)
    if regime == "sparse":
        # sparse texture with respiratory-like oscillating translation
        return SceneSpec(seed=seed + 2, motion="translation", profile="loop",
                         osc_period=55.0, texture="sparse-blobs",
                         texture_density=0.002, translation_px=(6.0, 3.0), **common)
    if regime == "deformation":
        return SceneSpec(seed=seed + 3, motion="deformation", texture="tissue-like",
                         bump_amplitude=2.5, bump_sigma=18.0, n_bumps=4, **common)
    if regime == "generic":
        return SceneSpec(seed=seed + 4, motion="composite", texture="dense-perlin",
                         texture_octaves=3, **common)
    if regime == "loop":
        return SceneSpec(seed=seed + 5, motion="rotation", profile="loop",
                         texture="dense-perlin", rotation_deg_per_frame=12.0,
                         **common)
    raise SceneSpecError(f"unknown regime {regime!r}")


def make_regime_suite(seed: int, n_train: int = 120, n_val: int = 40, n_test: int = 60,
                      size=(256, 192), illumination: str = "none") -> dict[str, SequenceDataset]:
    """Four small benchmark datasets, split train:val:test roughly
    3:1:1.5."""
    frames = n_train + n_val + n_test + 1
    suite = {}
    for regime in REGIMES:
        spec = regime_spec(regime, seed, size=size, frames=frames,
                           illumination=illumination)
        ds = dataset_from_spec(spec, name=regime)
        suite[regime] = split_dataset(ds, n_train, n_val, n_test)
    return suite
