"""Teacher oracles that produce gold-truth flow for distillation.

AnalyticTeacher replays the synthetic generator's exact ground truth (a
perfect teacher).  FileTeacher reads precomputed .flo files from any
external high-accuracy model run offline.  NoisyTeacher perturbs the
analytic flows with smoothed zero-mean Gaussian noise to study imperfect
teachers.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..flowcore import FlowField, FramePair, read_flo
from .dataset import SequenceDataset


class TeacherError(RuntimeError):
    pass


class TeacherOracle(ABC):
    """Flow-estimation capability; output must match pair dims, be finite."""

    @abstractmethod
    def estimate(self, pair: FramePair, index: int) -> FlowField:
        ...


class AnalyticTeacher(TeacherOracle):
    def __init__(self, flows: list[FlowField]):
        self.flows = list(flows)

    @staticmethod
    def from_dataset(ds: SequenceDataset) -> "AnalyticTeacher":
        if ds.gt_flows is None:
            raise TeacherError(f"dataset {ds.name!r} carries no generator ground truth")
        return AnalyticTeacher(ds.gt_flows)

    def estimate(self, pair: FramePair, index: int) -> FlowField:
        if not 0 <= index < len(self.flows):
            raise TeacherError(f"pair {index}: no stored flow (have {len(self.flows)})")
        return self.flows[index]


class FileTeacher(TeacherOracle):
    """Reads precomputed gold flows, one zero-padded .flo per pair index."""

    def __init__(self, directory, pattern: str = "{index:06d}.flo"):
        self.directory = Path(directory)
        self.pattern = pattern

    def estimate(self, pair: FramePair, index: int) -> FlowField:
        path = self.directory / self.pattern.format(index=index)
        if not path.exists():
            raise TeacherError(f"pair {index}: missing teacher flow file {path}")
        return read_flo(path)


class NoisyTeacher(TeacherOracle):
    """Analytic teacher plus smoothed zero-mean Gaussian perturbation.

    sigma is the per-component noise level in pixels before smoothing;
    smooth_sigma is the Gaussian kernel width.  sigma = 0 degenerates to
    the wrapped teacher exactly.  Noise is seeded per pair index, so it
    is deterministic and order-independent.
    """

    def __init__(self, inner: TeacherOracle, sigma: float, smooth_sigma: float = 2.0,
                 seed: int = 0):
        self.inner = inner
        self.sigma = float(sigma)
        self.smooth_sigma = float(smooth_sigma)
        self.seed = int(seed)

    def estimate(self, pair: FramePair, index: int) -> FlowField:
        base = self.inner.estimate(pair, index)
        if self.sigma == 0.0:
            return base
        rng = np.random.default_rng((self.seed, index))
        noise = rng.normal(0.0, self.sigma, size=(2, base.height, base.width))
        if self.smooth_sigma > 0.0:
            noise = np.stack([gaussian_filter(n, self.smooth_sigma) for n in noise])
        return FlowField(base.u + noise[0], base.v + noise[1])


def generate_gold(ds: SequenceDataset, teacher: TeacherOracle, workers: int = 1) -> SequenceDataset:
    """Annotate every pair (all splits) with teacher gold truth.

    Deterministic given the teacher; teacher failures are re-raised with
    the offending pair index.  Pairs are independent, so the work is
    parallel over a thread pool when workers > 1 (ordered, identical
    results regardless of worker count).
    """

    def one(index: int) -> FlowField:
        pair = ds.pair(index)
        try:
            flow = teacher.estimate(pair, index)
        except TeacherError:
            raise
        except Exception as exc:
            raise TeacherError(f"pair {index}: teacher failed: {exc}") from exc
        if (flow.height, flow.width) != (pair.height, pair.width):
            raise TeacherError(
                f"pair {index}: teacher flow {flow.width}x{flow.height} does not "
                f"match frames {pair.width}x{pair.height}"
            )
        return flow

    indices = range(ds.n_pairs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            gold = list(pool.map(one, indices))
    else:
        gold = [one(i) for i in indices]
    return replace(ds, gold=gold)
