"""Command-line entry point: gen / distill / eval / track / bench.

All commands emit static artifacts (PNG/CSV/text) under --out and never
mutate their input dataset directory.  Exit codes: 0 success, 1 usage,
2 data error, 3 numeric failure (NaN detected).
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import cv2
import numpy as np

from .distill import (
    AnalyticTeacher,
    DatasetError,
    FineTuneConfig,
    NoisyTeacher,
    evaluate,
    fine_tune,
    generate_gold,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .flowcore import FloError, FlowField, ImageFrame, flow_to_color, write_image
from .metrics import write_metrics_csv, write_summary
from .studentnet import (
    CheckpointError,
    NetConfig,
    StudentNet,
    init,
    load_checkpoint,
    predict_flow,
    save_checkpoint,
)
from .synthdata import REGIMES, SceneSpecError, dataset_from_spec, regime_spec
from .warp import make_grid_mesh, track_mesh, write_trajectory_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

CLI_REGIMES = REGIMES + ("generic", "loop")


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; we reserve 2 for data errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# RunConfig: plain-text key=value file, every key overridable by a flag


CONFIG_KEYS = {
    "regime": str,
    "seed": int,
    "frames": int,
    "width": int,
    "height": int,
    "illumination": str,
    "teacher_noise": float,
    "n_train": int,
    "n_val": int,
    "n_test": int,
    "base_width": int,
    "levels": int,
    "max_epochs": int,
    "val_every": int,
    "patience": int,
    "batch_size": int,
    "crop": int,
    "learning_rate": float,
    "lr_decay": float,
    "improvement_rtol": float,
    "loss_weights": str,
    "data": str,
    "out": str,
    "model": str,
    "init": str,
    "split": str,
    "compare": str,
    "viz": int,
    "grid_step": int,
    "size": int,
    "runs": int,
    "warmup": int,
    "heavy_base_width": int,
    "heavy_levels": int,
    "threads": int,
}

_PATH_KEYS = ("data", "init")  # must exist before any work starts


def load_run_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DatasetError(f"config file not found: {p}")
    values = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{p}:{lineno}: expected key = value, got {raw!r}")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{p}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{p}:{lineno}: bad value for {key}: {value!r}")
    return values


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge config-file values with flag overrides (flags win)."""
    opts = dict(getattr(args, "_defaults", {}))
    if getattr(args, "config", None):
        opts.update(load_run_config(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
    for key in _PATH_KEYS:
        if key in opts and opts[key] and not Path(opts[key]).exists():
            raise DatasetError(f"--{key.replace('_', '-')} path not found: {opts[key]}")
    return opts


def _out_dir(opts) -> Path:
    out = opts.get("out")
    if not out:
        raise UsageError("--out is required")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_finite(values, what: str):
    arr = np.asarray(list(values), dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"NaN/Inf detected in {what}")


# ---------------------------------------------------------------------------
# gen


def cmd_gen(opts) -> int:
    spec = regime_spec(
        opts["regime"],
        seed=opts["seed"],
        size=(opts["width"], opts["height"]),
        frames=opts["frames"],
        illumination=opts.get("illumination", "none"),
    )
    ds = dataset_from_spec(spec, name=opts["regime"])
    n_pairs = ds.n_pairs
    n_train, n_val = opts["n_train"], opts["n_val"]
    n_test = opts.get("n_test")
    if n_test is None:
        n_test = n_pairs - n_train - n_val
    ds = split_dataset(ds, n_train, n_val, n_test)
    teacher = AnalyticTeacher.from_dataset(ds)
    sigma = opts.get("teacher_noise", 0.0)
    if sigma:
        teacher = NoisyTeacher(teacher, sigma, seed=opts["seed"])
    ds = generate_gold(ds, teacher, workers=opts["threads"])
    out = _out_dir(opts)
    save_dataset(ds, out)
    print(f"wrote {len(ds.frames)} frames + {n_pairs} gold flows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# distill


def _parse_loss_weights(text: str):
    if text in ("", "uniform"):
        return None
    try:
        return tuple(float(w) for w in text.split(","))
    except ValueError:
        raise UsageError(f"bad --loss-weights value {text!r}")


def cmd_distill(opts) -> int:
    data = opts.get("data")
    if not data:
        raise UsageError("--data is required")
    ds = load_dataset(data)
    if ds.gold is None:
        raise DatasetError(
            f"{data}: no gold/ directory; run generate_gold with a teacher "
            "(the gen command does this automatically)"
        )
    if opts.get("init"):
        net = load_checkpoint(opts["init"])
    else:
        net = init(NetConfig(base_width=opts["base_width"], levels=opts["levels"],
                             seed=opts["seed"]))
    weights = _parse_loss_weights(opts["loss_weights"])
    if weights is not None and len(weights) != net.config.levels + 1:
        raise UsageError(
            f"--loss-weights has {len(weights)} values but the network "
            f"predicts at {net.config.levels + 1} scales"
        )
    crop = opts["crop"]
    config = FineTuneConfig(
        max_epochs=opts["max_epochs"],
        val_every=opts["val_every"],
        patience=opts["patience"],
        batch_size=opts["batch_size"],
        crop_size=(crop, crop),
        seed=opts["seed"],
        learning_rate=opts["learning_rate"],
        lr_decay=opts["lr_decay"],
        improvement_rtol=opts["improvement_rtol"],
        loss_weights=weights,
    )
    model, log = fine_tune(net, ds, config)
    _check_finite(log.train_losses, "training loss")
    out = _out_dir(opts)
    save_checkpoint(model, out / "model.ckpt")
    log.to_csv(out / "training_log.csv")
    (out / "summary.txt").write_text(log.summary_text())
    print(log.summary_text(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _load_model(spec_str: str, ds):
    """A checkpoint path, or 'gold' for the teacher-as-its-own-reference."""
    if spec_str == "gold":
        if ds.gold is None:
            raise DatasetError("dataset has no gold flows; cannot use model 'gold'")
        return AnalyticTeacher(ds.gold)
    if not Path(spec_str).is_file():
        raise DatasetError(f"checkpoint not found: {spec_str}")
    return load_checkpoint(spec_str)


def _write_eval_viz(model, ds, indices, out: Path, count: int):
    from .flowcore import FramePair
    from .flowcore.preprocess import crop_to_multiple

    for index in indices[:count]:
        pair = ds.pair(index)
        if isinstance(model, StudentNet):
            pair = FramePair(crop_to_multiple(pair.first, model.config.divisor),
                             crop_to_multiple(pair.second, model.config.divisor))
            pred = predict_flow(model, pair)
        else:
            pred = model.estimate(pair, index)
        write_image(flow_to_color(pred), out / f"flow_{index:06d}.png")


def cmd_eval(opts) -> int:
    data = opts.get("data")
    if not data:
        raise UsageError("--data is required")
    ds = load_dataset(data)
    out = _out_dir(opts)
    split_name = opts["split"]

    if opts.get("compare"):
        parts = [s.strip() for s in opts["compare"].split(",")]
        if len(parts) != 2:
            raise UsageError("--compare expects two comma-separated checkpoints")
        results = [evaluate(_load_model(p, ds), ds, split_name,
                            workers=opts["threads"]) for p in parts]
        _check_finite(results[0].epe_values + results[1].epe_values, "EPE values")
        pre, post = results
        reduction = (1.0 - post.mean / pre.mean) * 100.0 if pre.mean > 0 else 0.0
        lines = [
            f"split = {split_name}",
            f"pre_mean_epe = {pre.mean:.9f}",
            f"post_mean_epe = {post.mean:.9f}",
            f"reduction_percent = {reduction:.4f}",
        ]
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        rows = [
            {"pair": i, "epe_pre": f"{a:.9f}", "epe_post": f"{b:.9f}"}
            for i, a, b in zip(pre.pair_indices, pre.epe_values, post.epe_values)
        ]
        write_metrics_csv(rows, out / "metrics.csv")
        print("\n".join(lines))
        return EXIT_OK

    model = _load_model(opts["model"], ds)
    result = evaluate(model, ds, split_name, workers=opts["threads"])
    _check_finite(result.epe_values, "EPE values")
    write_metrics_csv(result.to_rows(), out / "metrics.csv")
    write_summary(result.epe_values, out / "summary.txt",
                  extra={"split": split_name, "model": opts["model"]})
    print(f"mean_epe = {result.mean:.9f} over {len(result.epe_values)} pairs")
    if opts.get("viz"):
        viz_dir = out / "viz"
        viz_dir.mkdir(exist_ok=True)
        indices = list(ds.require_split().indices(split_name))
        _write_eval_viz(model, ds, indices, viz_dir, opts["viz"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# track


class _ZeroModel:
    """Stationary-flow stand-in: predicts zero displacement everywhere."""


def _pair_flows(model, ds) -> list[FlowField]:
    from .flowcore import FramePair
    from .flowcore.preprocess import crop_to_multiple

    h, w = ds.frames[0].height, ds.frames[0].width

    def one(index: int) -> FlowField:
        if isinstance(model, _ZeroModel):
            return FlowField.zeros(h, w)
        pair = ds.pair(index)
        if isinstance(model, StudentNet):
            div = model.config.divisor
            cp = FramePair(crop_to_multiple(pair.first, div),
                           crop_to_multiple(pair.second, div))
            small = predict_flow(model, cp)
            if (small.height, small.width) == (h, w):
                return small
            # edge-pad back to frame size so tracking stays in frame coords
            y0 = (h - small.height) // 2
            x0 = (w - small.width) // 2
            pad = ((y0, h - small.height - y0), (x0, w - small.width - x0))
            return FlowField(np.pad(small.u, pad, mode="edge"),
                             np.pad(small.v, pad, mode="edge"))
        return model.estimate(pair, index)

    return [one(i) for i in range(ds.n_pairs)]


def cmd_track(opts) -> int:
    data = opts.get("data")
    if not data:
        raise UsageError("--data is required")
    ds = load_dataset(data)
    model = (_ZeroModel() if opts["model"] == "zero"
             else _load_model(opts["model"], ds))
    out = _out_dir(opts)
    h, w = ds.frames[0].height, ds.frames[0].width
    mesh = make_grid_mesh(w, h, step=opts["grid_step"])
    flows = _pair_flows(model, ds)
    trajectory = track_mesh(mesh, flows)
    for step in trajectory:
        _check_finite(step.points.ravel(), "tracked mesh points")

    start = trajectory[0].points
    with open(out / "drift.csv", "w") as f:
        f.write("frame,mean_drift\n")
        for n, step in enumerate(trajectory):
            drift = float(np.mean(np.linalg.norm(step.points - start, axis=1)))
            f.write(f"{n},{drift:.9f}\n")
    write_trajectory_csv(trajectory, out / "trajectory.csv")

    overlay_dir = out / "overlays"
    overlay_dir.mkdir(exist_ok=True)
    for n, step in enumerate(trajectory):
        _write_overlay(ds.frames[n], step, overlay_dir / f"overlay_{n:06d}.png")
    final_drift = float(np.mean(np.linalg.norm(trajectory[-1].points - start, axis=1)))
    print(f"final mean drift = {final_drift:.6f} px over {len(trajectory)} frames")
    return EXIT_OK


def _write_overlay(frame: ImageFrame, mesh, path):
    img = frame.data
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    canvas = np.ascontiguousarray((img[:, :, ::-1] * 255.0).round().astype(np.uint8))
    pts = mesh.points
    for i, j in mesh.topology:
        a = (int(round(pts[i, 0])), int(round(pts[i, 1])))
        b = (int(round(pts[j, 0])), int(round(pts[j, 1])))
        cv2.line(canvas, a, b, (0, 255, 0), 1, cv2.LINE_AA)
    for k in range(len(pts)):
        color = (0, 0, 255) if mesh.oob[k] else (0, 255, 255)
        cv2.circle(canvas, (int(round(pts[k, 0])), int(round(pts[k, 1]))), 2,
                   color, -1, cv2.LINE_AA)
    cv2.imwrite(str(path), canvas)


# ---------------------------------------------------------------------------
# bench


def _time_model(net: StudentNet, pair, runs: int, warmup: int) -> list[float]:
    times = []
    for k in range(runs + warmup):
        t0 = time.perf_counter()
        predict_flow(net, pair)
        dt = time.perf_counter() - t0
        if k >= warmup:
            times.append(dt)
    return times


def cmd_bench(opts) -> int:
    from .flowcore import FramePair

    out = _out_dir(opts)
    size = opts["size"]
    student_cfg = NetConfig(base_width=opts["base_width"], levels=opts["levels"],
                            seed=opts["seed"])
    heavy_cfg = NetConfig(base_width=opts["heavy_base_width"],
                          levels=opts["heavy_levels"], seed=opts["seed"])
    student = init(student_cfg)
    heavy = init(heavy_cfg)
    div = max(student_cfg.divisor, heavy_cfg.divisor)
    if size % div:
        raise UsageError(f"--size must be a multiple of {div}")

    rng = np.random.default_rng(opts["seed"])
    pair = FramePair(ImageFrame(rng.random((size, size, 1))),
                     ImageFrame(rng.random((size, size, 1))))

    results = {}
    for name, net in (("student", student), ("heavy", heavy)):
        times = _time_model(net, pair, opts["runs"], opts["warmup"])
        _check_finite(times, "latencies")
        results[name] = times

    with open(out / "timing.csv", "w") as f:
        f.write("model,run,seconds\n")
        for name, times in results.items():
            for k, t in enumerate(times):
                f.write(f"{name},{k},{t:.9f}\n")

    med = {n: float(np.median(t)) for n, t in results.items()}
    speedup = med["heavy"] / med["student"]
    lines = [f"input_size = {size}x{size}",
             f"runs = {opts['runs']} (after {opts['warmup']} warm-up)",
             f"student_params = {student.param_count}",
             f"heavy_params = {heavy.param_count}",
             f"param_ratio = {heavy.param_count / student.param_count:.3f}"]
    for name, times in results.items():
        arr = np.asarray(times)
        lines += [f"{name}_mean_s = {arr.mean():.6f}",
                  f"{name}_median_s = {med[name]:.6f}",
                  f"{name}_p95_s = {np.percentile(arr, 95):.6f}"]
    lines.append(f"speedup = {speedup:.4f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(sub, defaults: dict):
    sub.add_argument("--config", help="key = value config file; flags override it")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int,
                     help="worker threads for data-parallel sections (default 1)")
    sub.add_argument("--seed", type=int, help="RNG seed (default 0)")
    sub.set_defaults(_defaults={"threads": 1, "seed": 0, **defaults})


def build_parser() -> _Parser:
    parser = _Parser(prog="flowdistill",
                     description="Teacher-student optical-flow distillation "
                                 "on synthetic sequences.")
    subs = parser.add_subparsers(dest="command", metavar="command")

    g = subs.add_parser("gen", help="generate a synthetic dataset with gold flows",
                        description="Writes frames as %%06d.png, flows as "
                                    "gold/%%06d.flo, plus manifest.txt.")
    g.add_argument("--regime", choices=CLI_REGIMES,
                   help="motion regime (required)")
    g.add_argument("--frames", type=int, help="sequence length (default 221)")
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--illumination",
                   choices=["none", "vignette", "gain-ramp", "specular"])
    g.add_argument("--teacher-noise", dest="teacher_noise", type=float,
                   help="teacher noise sigma in px (default 0: analytic gold)")
    g.add_argument("--n-train", dest="n_train", type=int)
    g.add_argument("--n-val", dest="n_val", type=int)
    g.add_argument("--n-test", dest="n_test", type=int)
    _add_common(g, {"frames": 221, "width": 256, "height": 192,
                    "n_train": 120, "n_val": 40, "illumination": "none"})
    g.set_defaults(func=cmd_gen, _required=("regime", "out"))

    d = subs.add_parser("distill", help="fine-tune a student on a dataset",
                        description="Writes model.ckpt, training_log.csv "
                                    "(epoch,train_loss,val_loss), summary.txt.")
    d.add_argument("--data", help="dataset directory (required)")
    d.add_argument("--init", help="checkpoint to start from (default: fresh init)")
    d.add_argument("--base-width", dest="base_width", type=int)
    d.add_argument("--levels", type=int)
    d.add_argument("--max-epochs", dest="max_epochs", type=int)
    d.add_argument("--val-every", dest="val_every", type=int)
    d.add_argument("--patience", type=int)
    d.add_argument("--batch-size", dest="batch_size", type=int)
    d.add_argument("--crop", type=int, help="square training-crop side")
    d.add_argument("--learning-rate", dest="learning_rate", type=float)
    d.add_argument("--lr-decay", dest="lr_decay", type=float)
    d.add_argument("--improvement-rtol", dest="improvement_rtol", type=float)
    d.add_argument("--loss-weights", dest="loss_weights",
                   help="comma-separated per-scale weights, coarse to fine "
                        "(levels+1 values; 'uniform' for all-ones)")
    _add_common(d, {"base_width": 16, "levels": 4, "max_epochs": 100,
                    "val_every": 5, "patience": 4, "batch_size": 8, "crop": 64,
                    "learning_rate": 1e-3, "lr_decay": 0.93,
                    "improvement_rtol": 5e-3,
                    "loss_weights": "0.2,0.2,0.4,0.8,1.6"})
    d.set_defaults(func=cmd_distill, _required=("data", "out"))

    e = subs.add_parser("eval", help="evaluate a model against gold flows",
                        description="Writes metrics.csv (pair,epe) and "
                                    "summary.txt; --viz N adds flow PNGs.")
    e.add_argument("--data", help="dataset directory (required)")
    e.add_argument("--model", help="checkpoint path, or 'gold' for the teacher")
    e.add_argument("--split", choices=["train", "val", "test"])
    e.add_argument("--compare", metavar="PRE,POST",
                   help="two checkpoints; reports EPE reduction percentage")
    e.add_argument("--viz", type=int, help="write N flow-color PNGs")
    _add_common(e, {"split": "test"})
    e.set_defaults(func=cmd_eval, _required=("data", "out"))

    t = subs.add_parser("track", help="track a grid mesh through a sequence",
                        description="Writes overlays/, drift.csv "
                                    "(frame,mean_drift; one row per frame) and "
                                    "trajectory.csv (frame,point_id,x,y).")
    t.add_argument("--data", help="dataset directory (required)")
    t.add_argument("--model",
                   help="checkpoint path, 'gold' (ground truth) or 'zero'")
    t.add_argument("--grid-step", dest="grid_step", type=int)
    _add_common(t, {"grid_step": 16, "model": "gold"})
    t.set_defaults(func=cmd_track, _required=("data", "out"))

    b = subs.add_parser("bench", help="time the student vs a heavier reference",
                        description="Writes timing.csv (model,run,seconds) and "
                                    "summary.txt with mean/median/p95 + speedup.")
    b.add_argument("--size", type=int, help="square input side (default 256)")
    b.add_argument("--runs", type=int, help="timed runs per model (default 30)")
    b.add_argument("--warmup", type=int, help="discarded warm-up runs (default 3)")
    b.add_argument("--base-width", dest="base_width", type=int)
    b.add_argument("--levels", type=int)
    b.add_argument("--heavy-base-width", dest="heavy_base_width", type=int)
    b.add_argument("--heavy-levels", dest="heavy_levels", type=int)
    _add_common(b, {"size": 256, "runs": 30, "warmup": 3, "base_width": 16,
                    "levels": 4, "heavy_base_width": 48, "heavy_levels": 4})
    b.set_defaults(func=cmd_bench, _required=("out",))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return EXIT_USAGE
        opts = resolve_options(args)
        for key in args._required:
            if not opts.get(key):
                raise UsageError(f"--{key.replace('_', '-')} is required")
        return args.func(opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("run with --help for usage", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FloError, CheckpointError, SceneSpecError,
            FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
