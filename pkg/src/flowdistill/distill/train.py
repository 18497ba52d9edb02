"""Fine-tuning loop with random-crop augmentation and validation-based
early stopping, plus test-split evaluation against teacher gold truth.

The schedule follows the intra-operative protocol: train up to 100
epochs, validation every 5 epochs, stop after a fixed number of
non-improving validations, keep the best-validation checkpoint.  Crops
leave flow values untouched because displacements are translation
invariant.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..flowcore import FlowField, crop_center, crop_to_multiple
from ..metrics import BoxplotStats, boxplot_stats, epe_mean
from ..studentnet import (
    StudentNet,
    backward_arrays,
    default_loss_weights,
    forward_arrays,
    init_optimizer,
    optimizer_step,
    pair_to_input,
    predict_flow,
)
from .dataset import DatasetError, SequenceDataset
from .teacher import TeacherOracle


@dataclass(frozen=True)
class FineTuneConfig:
    max_epochs: int = 100
    val_every: int = 5
    patience: int = 3          # consecutive non-improving validations before stop
    batch_size: int = 8
    crop_size: tuple[int, int] = (64, 64)  # (height, width)
    # validation uses a larger center crop for a stabler early-stop signal
    val_crop_size: tuple[int, int] = (128, 128)
    seed: int = 0
    learning_rate: float = 1e-4
    lr_decay: float = 1.0      # multiplicative per-epoch learning-rate decay
    improvement_rtol: float = 1e-4
    loss_weights: tuple[float, ...] | None = None  # None: equal across scales

    def __post_init__(self):
        if self.val_every < 1:
            raise ValueError(f"val_every must be >= 1, got {self.val_every}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass
class TrainingLog:
    train_losses: list[float] = field(default_factory=list)   # one per epoch
    validations: list[tuple[int, float]] = field(default_factory=list)
    epoch_of_convergence: int = 0
    epochs_run: int = 0
    stopped_early: bool = False
    wall_time_s: float = 0.0
    train_indices_used: set = field(default_factory=set)
    val_indices_used: set = field(default_factory=set)

    @property
    def best_val_loss(self) -> float:
        return min(loss for _, loss in self.validations)

    def to_csv(self, path) -> None:
        vals = dict(self.validations)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss"])
            writer.writerow([0, "", f"{vals[0]:.9f}" if 0 in vals else ""])
            for epoch, loss in enumerate(self.train_losses, start=1):
                v = f"{vals[epoch]:.9f}" if epoch in vals else ""
                writer.writerow([epoch, f"{loss:.9f}", v])

    def summary_text(self) -> str:
        return (
            f"epochs_run = {self.epochs_run}\n"
            f"epoch_of_convergence = {self.epoch_of_convergence}\n"
            f"best_val_loss = {self.best_val_loss:.9f}\n"
            f"stopped_early = {self.stopped_early}\n"
            f"wall_time_s = {self.wall_time_s:.2f}\n"
        )


def _stack_input(frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
    stack = np.concatenate([frame_a.transpose(2, 0, 1), frame_b.transpose(2, 0, 1)])
    return stack * 2.0 - 1.0


def _crop_sample(ds: SequenceDataset, index: int, y0: int, x0: int, ch: int, cw: int):
    a = ds.frames[index].data[y0:y0 + ch, x0:x0 + cw]
    b = ds.frames[index + 1].data[y0:y0 + ch, x0:x0 + cw]
    g = ds.gold[index]
    gu = g.u[y0:y0 + ch, x0:x0 + cw]
    gv = g.v[y0:y0 + ch, x0:x0 + cw]
    return _stack_input(a, b), np.stack([gu, gv])


def _validate(net: StudentNet, ds: SequenceDataset, indices,
              config: FineTuneConfig) -> float:
    """Mean finest-scale endpoint error on center-cropped validation
    pairs, no augmentation.  Validating on the same metric the model is
    judged by gives a far less noisy early-stop signal than the
    multi-scale training loss."""
    h, w = ds.frames[0].height, ds.frames[0].width
    div = net.config.divisor
    ch = min(config.val_crop_size[0], h // div * div)
    cw = min(config.val_crop_size[1], w // div * div)
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    epes = []
    idx = list(indices)
    for start in range(0, len(idx), config.batch_size):
        chunk = idx[start:start + config.batch_size]
        xs, gs = zip(*(_crop_sample(ds, i, y0, x0, ch, cw) for i in chunk))
        flows, _ = forward_arrays(net.params, net.config, np.stack(xs))
        diff = flows[-1] - np.stack(gs)
        epe = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)
        epes.extend(float(np.mean(e)) for e in epe)
    return float(np.mean(epes))


def fine_tune(net: StudentNet, ds: SequenceDataset, config: FineTuneConfig):
    """Returns (best-validation network, TrainingLog).

    Fully deterministic under a fixed seed: identical (seed, config,
    dataset, initial parameters) reproduce bit-identical parameters and
    loss curves.  Only train and val pairs are ever read.
    """
    split = ds.require_split()
    train_idx = list(split.indices("train"))
    val_idx = list(split.indices("val"))
    if not train_idx:
        raise DatasetError("empty training split")
    if ds.gold is None:
        raise DatasetError(
            "dataset has no gold flows; run generate_gold with a teacher first"
        )
    ch, cw = config.crop_size
    div = net.config.divisor
    if ch % div or cw % div:
        raise ValueError(f"crop {cw}x{ch} not divisible by network divisor {div}")
    h, w = ds.frames[0].height, ds.frames[0].width
    if ch > h or cw > w:
        raise ValueError(f"crop {cw}x{ch} larger than frames {w}x{h}")

    rng = np.random.default_rng(config.seed)
    if config.loss_weights is not None:
        if len(config.loss_weights) != net.config.levels + 1:
            raise ValueError(
                f"{len(config.loss_weights)} loss weights for "
                f"{net.config.levels + 1} scales"
            )
        weights = list(config.loss_weights)
    else:
        weights = default_loss_weights(net.config)
    net = net.copy()
    state = init_optimizer(net, learning_rate=config.learning_rate)
    log = TrainingLog()
    t0 = time.perf_counter()

    def run_validation(epoch: int) -> float:
        loss = _validate(net, ds, val_idx, config) if val_idx else float("inf")
        log.validations.append((epoch, loss))
        log.val_indices_used.update(val_idx)
        return loss

    best_loss = run_validation(0)
    best_params = {k: v.copy() for k, v in net.params.items()}
    best_epoch = 0
    bad_validations = 0

    for epoch in range(1, config.max_epochs + 1):
        state.learning_rate = config.learning_rate * config.lr_decay ** (epoch - 1)
        order = rng.permutation(train_idx)
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start:start + config.batch_size]
            xs, gs = [], []
            for i in chunk:
                y0 = int(rng.integers(0, h - ch + 1))
                x0 = int(rng.integers(0, w - cw + 1))
                x_arr, g_arr = _crop_sample(ds, int(i), y0, x0, ch, cw)
                xs.append(x_arr)
                gs.append(g_arr)
            loss, grads = backward_arrays(
                net.params, net.config, np.stack(xs), np.stack(gs), weights
            )
            optimizer_step(net, grads, state)
            batch_losses.append(loss)
            log.train_indices_used.update(int(i) for i in chunk)
        log.train_losses.append(float(np.mean(batch_losses)))
        log.epochs_run = epoch

        if epoch % config.val_every == 0:
            val_loss = run_validation(epoch)
            if val_loss < best_loss * (1.0 - config.improvement_rtol):
                best_loss = val_loss
                best_params = {k: v.copy() for k, v in net.params.items()}
                best_epoch = epoch
                bad_validations = 0
            else:
                bad_validations += 1
                if bad_validations >= config.patience:
                    log.stopped_early = True
                    break

    log.epoch_of_convergence = best_epoch
    log.wall_time_s = time.perf_counter() - t0
    assert not log.train_indices_used.intersection(split.indices("test"))
    return StudentNet(net.config, best_params), log


@dataclass
class EvalResult:
    pair_indices: list[int]
    epe_values: list[float]
    mean: float
    stats: BoxplotStats

    def to_rows(self) -> list[dict]:
        return [
            {"pair": i, "epe": f"{e:.9f}"}
            for i, e in zip(self.pair_indices, self.epe_values)
        ]


def evaluate(model, ds: SequenceDataset, split_name: str = "test",
             workers: int = 1) -> EvalResult:
    """Per-pair mean EPE* of a StudentNet or TeacherOracle on a split.

    Frames (and gold) are center-cropped to the network's dimension
    multiple; teacher oracles see full frames.
    """
    split = ds.require_split()
    indices = list(split.indices(split_name))
    if not indices:
        raise DatasetError(f"empty {split_name} split")
    if ds.gold is None:
        raise DatasetError("dataset has no gold flows to evaluate against")

    is_net = isinstance(model, StudentNet)
    multiple = model.config.divisor if is_net else 1

    def one(index: int) -> float:
        pair = ds.pair(index)
        gold = ds.gold[index]
        if is_net:
            first = crop_to_multiple(pair.first, multiple)
            second = crop_to_multiple(pair.second, multiple)
            gold = crop_center(gold, first.height, first.width)
            from ..flowcore import FramePair
            pred = predict_flow(model, FramePair(first, second))
        else:
            pred = model.estimate(pair, index)
        return epe_mean(pred, gold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, indices))
    else:
        values = [one(i) for i in indices]
    return EvalResult(indices, values, float(np.mean(values)), boxplot_stats(values))
