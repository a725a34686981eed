"""Graph-based text-line construction from fixed-width proposals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from ..raster import Rect
from .model import DetectorConfig
from .targets import Proposal


@dataclass
class TextLine:
    rect: Rect
    members: list[Proposal]
    score: float
    transcript: object = None  # TokenSeq once recognized
    verified: bool = False
    text: str = ""

    def __post_init__(self):
        if not self.members:
            raise ValueError("a text line needs at least one member proposal")


def vertical_overlap(a: Proposal, b: Proposal) -> float:
    inter = min(a.y1, b.y1) - max(a.y0, b.y0)
    return max(0.0, inter) / min(a.h, b.h)


def _key(p: Proposal):
    # total order on proposal content so results do not depend on input order
    return (p.col, -p.score, p.cy, p.h, p.side if p.side is not None else math.inf)


def _pick(cands: list[Proposal]) -> Proposal:
    return min(cands, key=_key)


def _by_col(props: Sequence[Proposal]) -> dict[int, list[Proposal]]:
    cols: dict[int, list[Proposal]] = {}
    for p in props:
        cols.setdefault(p.col, []).append(p)
    return cols


def _qualifying(i: Proposal, j: Proposal, cfg: DetectorConfig) -> bool:
    return 0 < j.x - i.x <= cfg.max_horizontal_gap and vertical_overlap(i, j) >= cfg.min_vertical_overlap


def successor(i: Proposal, cols: dict[int, list[Proposal]], cfg: DetectorConfig) -> Proposal | None:
    reach = int(cfg.max_horizontal_gap // i.stride)
    for c in range(i.col + 1, i.col + reach + 1):
        cands = [j for j in cols.get(c, ()) if _qualifying(i, j, cfg)]
        if cands:
            return _pick(cands)
    return None


def predecessor(j: Proposal, cols: dict[int, list[Proposal]], cfg: DetectorConfig) -> Proposal | None:
    reach = int(cfg.max_horizontal_gap // j.stride)
    for c in range(j.col - 1, j.col - reach - 1, -1):
        cands = [i for i in cols.get(c, ()) if _qualifying(i, j, cfg)]
        if cands:
            return _pick(cands)
    return None


def line_rect(members: Sequence[Proposal]) -> Rect:
    first, last = members[0], members[-1]
    x0 = first.x if first.side is None else first.x_center + first.side * first.stride
    x1 = last.x + last.stride if last.side is None else last.x_center + last.side * last.stride
    y0 = min(p.y0 for p in members)
    y1 = max(p.y1 for p in members)
    ix0, iy0 = round(x0), round(y0)
    ix1, iy1 = max(round(x1), ix0 + 1), max(round(y1), iy0 + 1)
    return Rect(ix0, iy0, ix1, iy1)


def build_text_lines(proposals: Sequence[Proposal], cfg: DetectorConfig) -> list[TextLine]:
    """Link mutually-nearest proposals into chains and keep long-enough chains.

    j follows i when it lies 1..max_horizontal_gap px to the right with
    min-normalized vertical overlap >= min_vertical_overlap; the edge i->j is
    kept only if j is i's nearest follower and i is j's nearest predecessor.
    Nearest-column ties go to the higher score.
    """
    props = sorted(proposals, key=_key)
    idx = {id(p): n for n, p in enumerate(props)}
    parent = list(range(len(props)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    cols = _by_col(props)
    for p in props:
        j = successor(p, cols, cfg)
        if j is not None and predecessor(j, cols, cfg) is p:
            ra, rb = find(idx[id(p)]), find(idx[id(j)])
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, list[Proposal]] = {}
    for n, p in enumerate(props):
        groups.setdefault(find(n), []).append(p)
    lines = []
    for root in sorted(groups):
        members = sorted(groups[root], key=_key)
        if len(members) < cfg.min_proposals_per_line:
            continue
        lines.append(TextLine(line_rect(members), members, sum(m.score for m in members) / len(members)))
    lines.sort(key=lambda l: (l.rect.y0, l.rect.x0, l.rect.y1, l.rect.x1))
    return lines
