"""Grayscale rasters, netpbm I/O and a few geometric primitives.

Intensities live in [0, 1] with 0 = black ink and 1 = white paper.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class FormatError(ValueError):
    """Malformed or unsupported image stream."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rect {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def intersect(self, other: "Rect") -> "Rect | None":
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x0 >= x1 or y0 >= y1:
            return None
        return Rect(x0, y0, x1, y1)

    def translate(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


class Raster:
    """Immutable grayscale image backed by a read-only (height, width) float64 array."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"raster needs a non-empty 2-D array, got shape {arr.shape}")
        if np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("raster intensities must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Raster is immutable")

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[float]) -> "Raster":
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(height, width))

    @classmethod
    def filled(cls, width: int, height: int, value: float = 1.0) -> "Raster":
        return cls(np.full((height, width), value))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def frame(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def flat(self) -> list[float]:
        return self.pixels.ravel().tolist()

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"Raster({self.width}x{self.height})"


# -- netpbm ------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(data: bytes, magic: bytes) -> tuple[int, int, int, int]:
    if not data.startswith(magic):
        raise FormatError(f"expected magic {magic.decode()}", 0)
    pos = len(magic)
    fields = []
    for what in ("width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"missing {what}", pos)
        tok = m.group(1)
        if not tok.isdigit():
            raise FormatError(f"bad {what} {tok!r}", m.start(1))
        fields.append(int(tok))
        pos = m.end(1)
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("expected single whitespace after maxval", pos)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("image dimensions must be positive", len(magic))
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}, only 255", pos - 1)
    return width, height, maxval, pos + 1


def load_image(data: bytes) -> Raster:
    """Decode a binary PGM (P5, maxval 255) stream."""
    width, height, _, start = _read_header(data, b"P5")
    need = width * height
    payload = data[start:start + need]
    if len(payload) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(payload)}", start + len(payload))
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Raster(raw / 255.0)


def _to_bytes(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)


def save_image(raster: Raster) -> bytes:
    """Encode as binary PGM; inverse of :func:`load_image` up to 1/255 quantization."""
    header = b"P5\n%d %d\n255\n" % (raster.width, raster.height)
    return header + _to_bytes(raster.pixels).tobytes()


def read_pgm(path) -> Raster:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_pgm(path, raster: Raster) -> None:
    with open(path, "wb") as fh:
        fh.write(save_image(raster))


RED = (255, 0, 0)
GRAY = (128, 128, 128)


def _draw_border(rgb: np.ndarray, rect: Rect, color, dashed: bool = False) -> None:
    h, w = rgb.shape[:2]
    x0, y0, x1, y1 = rect.x0, rect.y0, rect.x1 - 1, rect.y1 - 1
    pts = []
    for x in range(x0, x1 + 1):
        pts.append((x, y0))
        pts.append((x, y1))
    for y in range(y0, y1 + 1):
        pts.append((x0, y))
        pts.append((x1, y))
    for x, y in pts:
        if not (0 <= x < w and 0 <= y < h):
            continue
        # 2-px on / 2-px off pattern along the perimeter
        if dashed and ((x + y) // 2) % 2:
            continue
        rgb[y, x] = color


def save_overlay(raster: Raster, boxes: Iterable) -> bytes:
    """Render a P6 image with 1-px box borders.

    ``boxes`` items are ``Rect`` or ``(Rect, label)``; a label of ``"removed"``
    draws a dashed gray border, anything else solid red.
    """
    gray = _to_bytes(raster.pixels)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    for item in boxes:
        rect, label = (item, None) if isinstance(item, Rect) else (item[0], item[1])
        if label == "removed":
            _draw_border(rgb, rect, GRAY, dashed=True)
        else:
            _draw_border(rgb, rect, RED)
    header = b"P6\n%d %d\n255\n" % (raster.width, raster.height)
    return header + rgb.tobytes()


def load_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 stream into a (height, width, 3) uint8 array."""
    width, height, _, start = _read_header(data, b"P6")
    need = width * height * 3
    payload = data[start:start + need]
    if len(payload) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(payload)}", start + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


# -- geometry ----------------------------------------------------------------

def crop(raster: Raster, r: Rect) -> Raster:
    inter = r.intersect(raster.frame)
    if inter is None:
        raise RegionError(f"crop rect {r.as_tuple()} does not intersect {raster.width}x{raster.height} image")
    return Raster(raster.pixels[inter.y0:inter.y1, inter.x0:inter.x1])


def _bilinear_axis(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(raster: Raster, new_w: int, new_h: int) -> Raster:
    """Bilinear resize with corner-aligned sampling (output corners hit input corners)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be >= 1")
    src = raster.pixels
    if (new_w, new_h) == (raster.width, raster.height):
        return raster
    y_lo, y_hi, fy = _bilinear_axis(raster.height, new_h)
    x_lo, x_hi, fx = _bilinear_axis(raster.width, new_w)
    top = src[y_lo][:, x_lo] * (1 - fx) + src[y_lo][:, x_hi] * fx
    bot = src[y_hi][:, x_lo] * (1 - fx) + src[y_hi][:, x_hi] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    lo, hi = src.min(), src.max()
    return Raster(np.clip(out, lo, hi))


def pad_to_multiple(raster: Raster, multiple: int, value: float = 1.0) -> Raster:
    """Pad right/bottom with ``value`` so both dimensions divide ``multiple``."""
    h, w = raster.height, raster.width
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return raster
    return Raster(np.pad(raster.pixels, ((0, ph), (0, pw)), constant_values=value))
