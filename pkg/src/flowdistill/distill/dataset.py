"""Sequence datasets: ordered frames, per-pair gold flows, temporal splits,
and the on-disk layout (numbered frames + gold/ + plain-text manifest)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from ..flowcore import (
    FlowField,
    FramePair,
    ImageFrame,
    read_flo,
    read_image,
    write_flo,
    write_image,
)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Split:
    """Contiguous temporal partition of pair indices, train -> val -> test."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def indices(self, name: str) -> range:
        lo, hi = getattr(self, name)
        return range(lo, hi)


@dataclass(eq=False)
class SequenceDataset:
    """Ordered frames plus consecutive-pair annotations.

    gold holds teacher pseudo-labels (absent until generated); gt_flows
    holds the generator's exact ground truth when the sequence is
    synthetic.
    """

    frames: list[ImageFrame]
    gold: list[FlowField] | None = None
    split: Split | None = None
    gt_flows: list[FlowField] | None = None
    name: str = ""
    provenance: str = ""

    @property
    def n_pairs(self) -> int:
        return len(self.frames) - 1

    def pair(self, index: int) -> FramePair:
        return FramePair(self.frames[index], self.frames[index + 1])

    def require_split(self) -> Split:
        if self.split is None:
            raise DatasetError(f"dataset {self.name!r} has no split")
        return self.split


def split_dataset(ds: SequenceDataset, n_train: int, n_val: int, n_test: int) -> SequenceDataset:
    """Contiguous temporal split covering a prefix of the pair list; the
    test segment is the temporally latest (application phase)."""
    for label, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        if n < 0:
            raise DatasetError(f"negative {label} count {n}")
    total = n_train + n_val + n_test
    if total > ds.n_pairs:
        raise DatasetError(f"split needs {total} pairs, dataset has {ds.n_pairs}")
    split = Split(
        train=(0, n_train),
        val=(n_train, n_train + n_val),
        test=(n_train + n_val, total),
    )
    return replace(ds, split=split)


# ---------------------------------------------------------------------------
# disk layout


def _frame_name(i: int) -> str:
    return f"{i:06d}.png"


def _flo_name(i: int) -> str:
    return f"{i:06d}.flo"


def save_dataset(ds: SequenceDataset, out_dir, bit_depth: int = 8) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(ds.frames):
        write_image(frame, out / _frame_name(i), bit_depth=bit_depth)
    flows = ds.gold if ds.gold is not None else ds.gt_flows
    if flows is not None:
        gold_dir = out / "gold"
        gold_dir.mkdir(exist_ok=True)
        for i, flow in enumerate(flows):
            write_flo(flow, gold_dir / _flo_name(i))
    lines = [f"n_frames = {len(ds.frames)}"]
    if ds.split is not None:
        for part in ("train", "val", "test"):
            lo, hi = getattr(ds.split, part)
            lines.append(f"split_{part} = {lo} {hi}")
    if ds.name:
        lines.append(f"name = {ds.name}")
    if ds.provenance:
        lines.append(f"provenance = {ds.provenance}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_dataset(path) -> SequenceDataset:
    root = Path(path)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise DatasetError(f"{root}: missing manifest.txt")
    fields: dict[str, str] = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        n_frames = int(fields["n_frames"])
    except (KeyError, ValueError):
        raise DatasetError(f"{root}: manifest lacks a valid n_frames entry")
    frames = []
    for i in range(n_frames):
        fp = root / _frame_name(i)
        if not fp.exists():
            raise DatasetError(f"{root}: missing frame {fp.name}")
        frames.append(read_image(fp))
    gold = None
    gold_dir = root / "gold"
    if gold_dir.is_dir():
        gold = []
        for i in range(n_frames - 1):
            gp = gold_dir / _flo_name(i)
            if not gp.exists():
                raise DatasetError(f"{root}: missing gold flow {gp.name}")
            gold.append(read_flo(gp))
    split = None
    if "split_train" in fields:
        def _rng(key):
            lo, hi = fields[key].split()
            return int(lo), int(hi)
        split = Split(_rng("split_train"), _rng("split_val"), _rng("split_test"))
    return SequenceDataset(
        frames=frames,
        gold=gold,
        split=split,
        name=fields.get("name", root.name),
        provenance=fields.get("provenance", ""),
    )
