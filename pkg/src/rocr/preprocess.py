"""Receipt-area extraction from x/y paper-pixel histograms.

A small receipt scanned on a large bed only occupies part of the frame;
cropping to it before detection keeps its text large relative to the
detector stride.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Raster, Rect


class NoReceiptError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    paper_polarity: str = "bright-paper"
    ink_threshold: float = 0.6
    run_threshold: float = 0.05
    margin: int = 8

    def __post_init__(self):
        if self.paper_polarity not in ("bright-paper", "dark-paper"):
            raise ValueError(f"unknown paper polarity {self.paper_polarity!r}")
        if not (0 < self.ink_threshold < 1 and 0 < self.run_threshold < 1):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")


def paper_mask(img: Raster, cfg: PreprocessConfig) -> np.ndarray:
    if cfg.paper_polarity == "bright-paper":
        return img.pixels > cfg.ink_threshold
    return img.pixels < cfg.ink_threshold


def axis_profile(img: Raster, axis: str, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Count paper pixels per column (axis='x') or per row (axis='y')."""
    mask = paper_mask(img, cfg)
    if axis == "x":
        return mask.sum(axis=0)
    if axis == "y":
        return mask.sum(axis=1)
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def longest_run(profile, cfg: PreprocessConfig = PreprocessConfig()) -> tuple[int, int]:
    """Half-open span of the longest run with ``profile > run_threshold * max``; earliest wins ties."""
    prof = np.asarray(profile)
    if prof.size == 0:
        raise ValueError("empty profile")
    peak = prof.max()
    if peak <= 0:
        raise NoReceiptError("no paper pixels found")
    above = prof > cfg.run_threshold * peak
    best = (0, 0)
    start = None
    for i, flag in enumerate(list(above) + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return best


def extract_receipt_region(img: Raster, cfg: PreprocessConfig = PreprocessConfig()) -> Rect:
    x0, x1 = longest_run(axis_profile(img, "x", cfg), cfg)
    y0, y1 = longest_run(axis_profile(img, "y", cfg), cfg)
    m = cfg.margin
    return Rect(max(0, x0 - m), max(0, y0 - m), min(img.width, x1 + m), min(img.height, y1 + m))
