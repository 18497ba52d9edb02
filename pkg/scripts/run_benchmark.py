#!/usr/bin/env python3
"""Inference-speed benchmark: compact student vs. a heavy reference network
(~8x the parameter count) on a full-resolution frame pair.

Usage: python3 scripts/run_benchmark.py [workdir]
"""
import sys
from pathlib import Path

from flowdistill.cli import main as cli

if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/benchmark")
    cli(["bench", "--out", str(out), "--size", "256",
         "--runs", "30", "--warmup", "3"])
    print((out / "summary.txt").read_text())
