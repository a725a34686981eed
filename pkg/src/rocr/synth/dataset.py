"""SROIE-style dataset directories.

Each receipt ``NNNNNN`` is stored as ``NNNNNN.pgm`` plus ``NNNNNN.txt`` with
one ``x1,y1,x2,y2,x3,y3,x4,y4,transcript`` line per text line.  Only the
first eight comma-separated fields are coordinates, so transcripts may
contain commas.  Synthetic handwriting lines carry a ``###HW###`` prefix.
"""
from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

from ..raster import read_pgm, save_image
from .generate import Annotation, Receipt
from .rng import SplitMix64

HW_MARKER = "###HW###"


class DatasetError(ValueError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_annotation(a: Annotation, synthetic: bool = True) -> str:
    text = a.transcript
    if synthetic and a.style == "handwriting":
        text = HW_MARKER + text
    return ",".join(str(v) for v in a.quad) + "," + text


def parse_annotation_line(line: str, synthetic: bool = True, where: str = "<string>") -> Annotation:
    parts = line.rstrip("\r\n").split(",", 8)
    if len(parts) < 9:
        raise DatasetError(f"{where}: expected 8 coordinates and a transcript")
    try:
        quad = tuple(int(v) for v in parts[:8])
    except ValueError:
        raise DatasetError(f"{where}: non-integer coordinate in {parts[:8]}") from None
    text = parts[8]
    style = "printed"
    if synthetic and text.startswith(HW_MARKER):
        style, text = "handwriting", text[len(HW_MARKER):]
    xs, ys = quad[0::2], quad[1::2]
    if min(xs) >= max(xs) or min(ys) >= max(ys):
        raise DatasetError(f"{where}: quad has zero area")
    try:
        return Annotation(quad, text, style)
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def load_annotations(path, synthetic: bool = True) -> list[Annotation]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            out.append(parse_annotation_line(line, synthetic, where=f"{path}:{lineno}"))
    return out


def save_dataset(directory, items: list[Receipt], splits: dict[str, list[str]] | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for item in items:
        _atomic_write(d / f"{item.id}.pgm", save_image(item.image))
        text = "".join(format_annotation(a) + "\n" for a in item.annotations)
        _atomic_write(d / f"{item.id}.txt", text.encode("utf-8"))
    if splits is None:
        splits = {"all": [it.id for it in items]}
    lines = [f"{name} {rid}" for name, ids in splits.items() for rid in ids]
    _atomic_write(d / "manifest.txt", ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(directory) -> dict[str, list[str]]:
    splits: dict[str, list[str]] = {}
    path = Path(directory) / "manifest.txt"
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected '<split> <id>'")
            splits.setdefault(parts[0], []).append(parts[1])
    return splits


def load_dataset(directory, synthetic: bool = True, split: str | None = None) -> list[Receipt]:
    d = Path(directory)
    if (d / "manifest.txt").exists():
        manifest = read_manifest(d)
        if split is not None:
            if split not in manifest:
                raise DatasetError(f"{d}: no split named {split!r}")
            ids = manifest[split]
        else:
            ids = sorted({rid for v in manifest.values() for rid in v})
    else:
        if split is not None:
            raise DatasetError(f"{d}: no manifest.txt, cannot select split {split!r}")
        ids = sorted(p.stem for p in d.glob("*.pgm"))
    items = []
    for rid in ids:
        img = read_pgm(d / f"{rid}.pgm")
        anns = load_annotations(d / f"{rid}.txt", synthetic)
        items.append(Receipt(rid, img, anns))
    return items


def split_sizes(n: int, ratios=(0.8, 0.1, 0.1)) -> tuple[int, int, int]:
    r_train, r_val, r_test = ratios
    train = math.floor(r_train * n + 1e-9)
    rest = n - train
    if r_val + r_test == 0:
        return train, rest, 0
    val = math.ceil(rest * r_val / (r_val + r_test) - 1e-9)
    return train, val, rest - val


def split_dataset(items: list, ratios=(0.8, 0.1, 0.1), seed: int = 1):
    """Seeded shuffle, then train = floor(r_train * n) and the rest split val-first (ceil)."""
    if not items:
        raise ValueError("cannot split an empty dataset")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    order = list(range(len(items)))
    SplitMix64(seed).shuffle(order)
    n_train, n_val, _ = split_sizes(len(items), ratios)
    pick = [items[i] for i in order]
    return pick[:n_train], pick[n_train:n_train + n_val], pick[n_train + n_val:]
