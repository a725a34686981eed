"""Deterministic synthetic receipts with exact line-level ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..raster import Raster, Rect
from .font import FONT, GLYPH_H, GLYPH_W, check_text
from .rng import SplitMix64, derive_seed

LINE_MARGIN = 2
CANVAS_INTENSITY = 0.1

SHOPS = ["CORNER MART", "FRESH FOODS", "CITY BAKERY", "GREEN GROCER", "QUICK STOP", "SUN CAFE",
         "BOOK NOOK", "HARDWARE CO", "TEA HOUSE", "MINI MARKET", "DELI 24", "NOODLE BAR"]
ITEMS = ["MILK", "BREAD", "EGGS", "RICE", "TEA", "SOAP", "PEN", "JAM", "SALT", "OIL", "FISH",
         "CAKE", "BEER", "SODA", "NUTS", "TOFU", "FLOUR", "APPLE", "LIME", "CORN", "PAPER", "GUM"]
NOTES = ["PAID", "THANK YOU", "OK", "NO BAG", "SIGN HERE", "CHECKED"]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    width_range: tuple[int, int] = (150, 230)
    height_range: tuple[int, int] = (120, 260)
    lines_range: tuple[int, int] = (5, 8)
    scale_range: tuple[int, int] = (2, 2)
    line_gap_range: tuple[int, int] = (4, 9)
    handwriting_fraction: float = 0.0
    canvas: tuple[tuple[int, int], tuple[int, int]] | None = None  # ((w_lo, w_hi), (h_lo, h_hi))
    noise: float = 0.02

    def __post_init__(self):
        for name in ("width_range", "height_range", "lines_range", "scale_range", "line_gap_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty range, got {(lo, hi)}")
        if self.lines_range[0] < 1 or self.scale_range[0] < 1:
            raise ValueError("need at least one line and scale >= 1")
        if not 0.0 <= self.handwriting_fraction <= 1.0:
            raise ValueError("handwriting_fraction must lie in [0, 1]")
        if self.canvas is not None:
            (a, b), (c, d) = self.canvas
            if a > b or c > d:
                raise ValueError("canvas ranges must be non-empty")


@dataclass(frozen=True)
class Annotation:
    quad: tuple[int, int, int, int, int, int, int, int]
    transcript: str
    style: str = "printed"

    def __post_init__(self):
        if self.style not in ("printed", "handwriting"):
            raise ValueError(f"unknown style {self.style!r}")
        if self.style == "printed" and not self.transcript:
            raise ValueError("printed annotations need a transcript")

    @property
    def rect(self) -> Rect:
        xs, ys = self.quad[0::2], self.quad[1::2]
        return Rect(min(xs), min(ys), max(xs), max(ys))

    @classmethod
    def from_rect(cls, r: Rect, transcript: str, style: str = "printed") -> "Annotation":
        # clockwise from top-left; right/bottom coordinates are exclusive
        return cls((r.x0, r.y0, r.x1, r.y0, r.x1, r.y1, r.x0, r.y1), transcript, style)


@dataclass
class Receipt:
    id: str
    image: Raster
    annotations: list[Annotation] = field(default_factory=list)
    paste: Rect | None = None  # receipt region inside the canvas, when pasted

    def printed(self) -> list[Annotation]:
        return [a for a in self.annotations if a.style == "printed"]


def text_width(n_chars: int, scale: int) -> int:
    return 2 * LINE_MARGIN + n_chars * GLYPH_W * scale + (n_chars - 1) * scale


def line_height(scale: int) -> int:
    return GLYPH_H * scale + 2 * LINE_MARGIN


def render_ink(text: str, scale: int) -> np.ndarray:
    check_text(text)
    if not text:
        raise ValueError("text must be non-empty")
    ink = np.zeros((line_height(scale), text_width(len(text), scale)), dtype=bool)
    x = LINE_MARGIN
    for ch in text:
        g = np.kron(FONT[ch], np.ones((scale, scale), dtype=bool))
        ink[LINE_MARGIN:LINE_MARGIN + GLYPH_H * scale, x:x + GLYPH_W * scale] = g
        x += (GLYPH_W + 1) * scale
    return ink


def _handwriting(ink: np.ndarray, scale: int, rng: SplitMix64) -> np.ndarray:
    h, w = ink.shape
    period = rng.uniform(8.0, 20.0) * scale
    phase = rng.uniform(0.0, 2 * np.pi)
    amp = 2 * scale
    shifts = np.rint(amp * np.sin(2 * np.pi * np.arange(w) / period + phase)).astype(int)
    out = np.zeros_like(ink)
    rows = np.arange(h)
    for col in range(w):
        src = rows - shifts[col]
        ok = (src >= 0) & (src < h)
        out[rows[ok], col] = ink[src[ok], col]
    keep = rng.uniform_array(h * w).reshape(h, w) >= 0.1
    return out & keep


def render_text_line(text: str, scale: int = 1, style: str = "printed", seed: int = 0) -> Raster:
    """Render ``text`` in the bitmap font: ink 0.0 on paper 1.0.

    Handwriting style adds a per-column sinusoidal vertical jitter of
    amplitude ``2 * scale`` and drops 10% of ink pixels; both are seeded.
    """
    if style not in ("printed", "handwriting"):
        raise ValueError(f"unknown style {style!r}")
    ink = render_ink(text, scale)
    if style == "handwriting":
        ink = _handwriting(ink, scale, SplitMix64(derive_seed(seed, len(text), scale)))
    return Raster(np.where(ink, 0.0, 1.0))


def _fmt_price(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def receipt_lines(rng: SplitMix64, n_lines: int) -> list[str]:
    lines = [rng.choice(SHOPS)]
    if n_lines >= 4:
        d, m, y = rng.randint(1, 28), rng.randint(1, 12), rng.randint(2015, 2019)
        lines.append(f"DATE: {d:02d}/{m:02d}/{y}")
    total = 0
    while len(lines) < n_lines - 1:
        qty = rng.randint(1, 5)
        cents = rng.randint(50, 2500)
        total += qty * cents
        lines.append(f"{rng.choice(ITEMS)}  {qty}  {_fmt_price(cents)}")
    lines.append(f"TOTAL  ${_fmt_price(total)}" if n_lines > 1 else lines.pop())
    return lines[:n_lines]


def generate_receipt(cfg: SynthConfig, index: int) -> Receipt:
    """Receipt ``index`` of the stream defined by ``cfg.seed``; a pure function of both."""
    rng = SplitMix64(derive_seed(cfg.seed, index))
    n_lines = rng.randint(*cfg.lines_range)
    scale = rng.randint(*cfg.scale_range)
    texts = receipt_lines(rng, n_lines)
    styles = ["handwriting" if rng.random() < cfg.handwriting_fraction else "printed" for _ in texts]
    if cfg.handwriting_fraction >= 1.0:
        styles = ["handwriting"] * len(texts)
    left = rng.randint(6, 14)
    top = rng.randint(6, 14)
    gaps = [rng.randint(*cfg.line_gap_range) for _ in texts]

    widest = max(text_width(len(t), scale) for t in texts)
    width = max(rng.randint(*cfg.width_range), widest + 2 * left)
    needed = top + sum(line_height(scale) + g for g in gaps) + 6
    height = max(rng.randint(*cfg.height_range), needed)

    page = np.ones((height, width))
    annots = []
    y = top
    for i, (text, style, gap) in enumerate(zip(texts, styles, gaps)):
        line = render_text_line(text, scale, style, seed=derive_seed(cfg.seed, index, i))
        h, w = line.height, line.width
        page[y:y + h, left:left + w] = np.minimum(page[y:y + h, left:left + w], line.pixels)
        annots.append(Annotation.from_rect(Rect(left, y, left + w, y + h), text, style))
        y += h + gap

    paste = None
    if cfg.canvas is not None:
        (wlo, whi), (hlo, hhi) = cfg.canvas
        cw = max(rng.randint(wlo, whi), width)
        ch = max(rng.randint(hlo, hhi), height)
        ox, oy = rng.randint(0, cw - width), rng.randint(0, ch - height)
        canvas = np.full((ch, cw), CANVAS_INTENSITY)
        canvas[oy:oy + height, ox:ox + width] = page
        page = canvas
        paste = Rect(ox, oy, ox + width, oy + height)
        annots = [Annotation.from_rect(a.rect.translate(ox, oy), a.transcript, a.style) for a in annots]

    if cfg.noise > 0:
        page = page + cfg.noise * rng.normal_array(page.shape)
    page = np.clip(page, 0.0, 1.0)
    return Receipt(f"{index:06d}", Raster(page), annots, paste)


def generate_dataset(cfg: SynthConfig, count: int, start: int = 0) -> list[Receipt]:
    return [generate_receipt(cfg, i) for i in range(start, start + count)]
