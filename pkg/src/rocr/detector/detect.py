from __future__ import annotations

from ..core import ParamSet
from ..raster import Raster, Rect, resize
from .lines import TextLine, build_text_lines
from .model import DetectorConfig, detector_forward
from .targets import decode_proposals


def input_scale(img: Raster, cfg: DetectorConfig) -> float:
    longest = max(img.width, img.height)
    return cfg.max_side / longest if longest > cfg.max_side else 1.0


def rescale(img: Raster, scale: float) -> Raster:
    if scale == 1.0:
        return img
    return resize(img, max(1, round(img.width * scale)), max(1, round(img.height * scale)))


def scale_rect(r: Rect, sx: float, sy: float) -> Rect:
    x0, y0 = round(r.x0 * sx), round(r.y0 * sy)
    return Rect(x0, y0, max(round(r.x1 * sx), x0 + 1), max(round(r.y1 * sy), y0 + 1))


def detect(img: Raster, params: ParamSet, cfg: DetectorConfig) -> list[TextLine]:
    """Text lines in ``img`` coordinates; oversized inputs are downscaled to ``cfg.max_side`` first."""
    scale = input_scale(img, cfg)
    work = rescale(img, scale)
    head = detector_forward(work, params, cfg)
    lines = build_text_lines(decode_proposals(head, cfg), cfg)
    sx, sy = img.width / work.width, img.height / work.height
    out = []
    for line in lines:
        r = line.rect if scale == 1.0 else scale_rect(line.rect, sx, sy)
        r = r.intersect(img.frame)
        if r is None:
            continue
        line.rect = r
        out.append(line)
    return out


def format_detections(lines: list[TextLine]) -> str:
    return "".join(f"{l.rect.x0},{l.rect.y0},{l.rect.x1},{l.rect.y1},{l.score:.4f}\n" for l in lines)


def parse_detections(text: str) -> list[tuple[Rect, float]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"detection line {lineno}: expected x0,y0,x1,y1,score")
        x0, y0, x1, y1 = (int(v) for v in parts[:4])
        out.append((Rect(x0, y0, x1, y1), float(parts[4])))
    return out
