#!/usr/bin/env python3
"""Full distillation study: pretrain a generic student, then fine-tune and
evaluate it on each analytic regime, reporting the endpoint-error reduction.

Usage: python3 scripts/run_regime_suite.py [workdir]
"""
import sys
import time
from pathlib import Path

from flowdistill.cli import main as cli

REGIMES = ("rotation", "scale", "sparse", "deformation")


def run(workdir: Path) -> None:
    workdir.mkdir(parents=True, exist_ok=True)

    generic = workdir / "generic"
    cli(["gen", "--regime", "composite", "--seed", "100", "--frames", "161",
         "--n-train", "120", "--n-val", "40", "--n-test", "0",
         "--out", str(generic / "data")])
    cli(["distill", "--data", str(generic / "data"),
         "--out", str(generic / "model"),
         "--learning-rate", "2e-3", "--lr-decay", "1.0",
         "--loss-weights", "uniform",
         "--max-epochs", "12", "--patience", "100"])
    pre = generic / "model" / "model.ckpt"

    for regime in REGIMES:
        t0 = time.perf_counter()
        d = workdir / regime
        cli(["gen", "--regime", regime, "--seed", "7", "--frames", "221",
             "--out", str(d / "data")])
        cli(["distill", "--data", str(d / "data"), "--out", str(d / "model"),
             "--init", str(pre)])
        cli(["eval", "--data", str(d / "data"), "--out", str(d / "eval"),
             "--compare", f"{pre},{d / 'model' / 'model.ckpt'}",
             "--viz", "3"])
        print(f"[{regime}] done in {time.perf_counter() - t0:.0f}s; "
              f"see {d / 'eval' / 'summary.txt'}")


if __name__ == "__main__":
    run(Path(sys.argv[1] if len(sys.argv) > 1 else "runs/regime_suite"))
