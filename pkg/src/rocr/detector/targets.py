"""Anchor geometry: box encoding/decoding, training targets, NMS and the multi-task loss."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import Tensor, bce_with_logits, smooth_l1
from ..core.tensor import add, mul, tsum
from ..raster import Rect
from .model import DetectionHead, DetectorConfig


@dataclass(frozen=True)
class Proposal:
    """A stride-wide vertical text segment in padded-image pixel space.

    ``side`` is the predicted side-refinement offset in stride units relative
    to the column centre; ``None`` disables refinement at that end.
    """

    col: int
    cy: float
    h: float
    score: float
    side: float | None
    stride: int

    @property
    def x(self) -> float:
        return self.col * self.stride

    @property
    def x_center(self) -> float:
        return self.col * self.stride + self.stride / 2

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2


def anchor_center(row: int, stride: int) -> float:
    return (row + 0.5) * stride


def encode(cy: float, h: float, cy_a: float, h_a: float) -> tuple[float, float]:
    return (cy - cy_a) / h_a, math.log(h / h_a)


def decode(v_c: float, v_h: float, cy_a: float, h_a: float) -> tuple[float, float]:
    return cy_a + v_c * h_a, h_a * math.exp(v_h)


def vertical_iou(c1, h1, c2, h2):
    """IoU of two boxes sharing the same x-extent (broadcasts over numpy inputs)."""
    top = np.maximum(c1 - h1 / 2, c2 - h2 / 2)
    bot = np.minimum(c1 + h1 / 2, c2 + h2 / 2)
    inter = np.maximum(0.0, bot - top)
    return inter / (h1 + h2 - inter)


def proposal_iou(a: Proposal, b: Proposal) -> float:
    w = min(a.x + a.stride, b.x + b.stride) - max(a.x, b.x)
    if w <= 0:
        return 0.0
    hi = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = w * hi
    union = a.stride * a.h + b.stride * b.h - inter
    return inter / union


def nms(props: Sequence[Proposal], iou_threshold: float) -> list[Proposal]:
    order = sorted(props, key=lambda p: (-p.score, p.col, p.cy, p.h))
    keep: list[Proposal] = []
    for p in order:
        if all(p.col != q.col or proposal_iou(p, q) <= iou_threshold for q in keep):
            keep.append(p)
    return keep


def decode_proposals(head: DetectionHead, cfg: DetectorConfig) -> list[Proposal]:
    """Threshold scores, keep the best anchor per cell, decode boxes, then NMS."""
    scores = head.scores
    v_c, v_h, side = head.v_c, head.v_h, head.side.data
    hp, wp, _ = scores.shape
    best = scores.argmax(axis=2)
    props = []
    for r in range(hp):
        cy_a = anchor_center(r, cfg.stride)
        for c in range(wp):
            a = int(best[r, c])
            s = float(scores[r, c, a])
            if s < cfg.score_threshold:
                continue
            h_a = cfg.anchor_heights[a]
            cy, h = decode(float(v_c[r, c, a]), float(v_h[r, c, a]), cy_a, h_a)
            props.append(Proposal(c, cy, h, s, float(side[r, c, a]), cfg.stride))
    return nms(props, cfg.nms_iou)


@dataclass
class Targets:
    labels: np.ndarray      # [H', W', k]: 1 positive, 0 negative, -1 ignored
    reg: np.ndarray         # [H', W', 2k]
    side: np.ndarray        # [H', W', k]
    side_mask: np.ndarray   # [H', W', k] bool

    @property
    def positives(self) -> int:
        return int((self.labels == 1).sum())


def gt_columns(r: Rect, stride: int, width_cells: int) -> range:
    lo = max(0, r.x0 // stride)
    hi = min(width_cells, -(-r.x1 // stride))
    return range(lo, hi)


def assign_targets(gt: Sequence[Rect], grid: tuple[int, int], cfg: DetectorConfig,
                   pos_iou: float = 0.7, neg_iou: float = 0.3) -> Targets:
    hp, wp = grid
    k = cfg.k
    s = cfg.stride
    heights = np.asarray(cfg.anchor_heights)
    centers = (np.arange(hp) + 0.5) * s
    labels = np.zeros((hp, wp, k), dtype=np.int8)
    reg = np.zeros((hp, wp, 2 * k))
    side = np.zeros((hp, wp, k))
    side_mask = np.zeros((hp, wp, k), dtype=bool)

    # per column: list of (cy, h, gt index, end flag, x_side)
    slices: dict[int, list] = {}
    for gi, r in enumerate(gt):
        cols = gt_columns(r, s, wp)
        for c in cols:
            end = None
            if c == cols[0]:
                end = r.x0
            elif c == cols[-1]:
                end = r.x1
            slices.setdefault(c, []).append(((r.y0 + r.y1) / 2, r.y1 - r.y0, gi, end))

    for c, items in slices.items():
        ious = np.stack([vertical_iou(centers[:, None], heights[None, :], cy, h) for cy, h, _, _ in items])
        best_slice = ious.argmax(axis=0)           # [H', k]
        max_iou = ious.max(axis=0)
        col_labels = np.where(max_iou < neg_iou, 0, -1).astype(np.int8)
        assigned = np.where(max_iou > pos_iou, best_slice, -1)
        for si in range(len(items)):
            flat = int(ious[si].argmax())        # first maximum in (row, anchor) order
            r_, a_ = divmod(flat, k)
            if ious[si, r_, a_] > 0 and assigned[r_, a_] < 0:
                assigned[r_, a_] = si
        pos = assigned >= 0
        col_labels[pos] = 1
        labels[:, c, :] = col_labels
        for r_, a_ in zip(*np.nonzero(pos)):
            cy, h, _, end = items[assigned[r_, a_]]
            vc, vh = encode(cy, h, centers[r_], heights[a_])
            reg[r_, c, 2 * a_] = vc
            reg[r_, c, 2 * a_ + 1] = vh
            if end is not None:
                side[r_, c, a_] = (end - (c * s + s / 2)) / s
                side_mask[r_, c, a_] = True
    return Targets(labels, reg, side, side_mask)


def detection_loss(head: DetectionHead, targets: Targets, cfg: DetectorConfig) -> Tensor:
    """Mean BCE over labelled anchors + weighted smooth-L1 terms over positives.

    Regression is summed over (v_c, v_h) and averaged over positive anchors;
    side offsets are averaged over positives in end columns.  Empty means are 0.
    """
    lab = targets.labels
    cls_mask = (lab >= 0).astype(np.float64)
    n_cls = cls_mask.sum()
    total = Tensor(0.0)
    if n_cls:
        bce = bce_with_logits(head.logits, (lab == 1).astype(np.float64))
        total = add(total, tsum(mul(bce, cls_mask / n_cls)))
    pos = (lab == 1)
    n_pos = pos.sum()
    if n_pos:
        reg_mask = np.repeat(pos, 2, axis=2).astype(np.float64)
        sl = smooth_l1(head.reg, targets.reg)
        total = add(total, tsum(mul(sl, reg_mask * (cfg.lambda_reg / n_pos))))
    n_side = targets.side_mask.sum()
    if n_side:
        sl = smooth_l1(head.side, targets.side)
        total = add(total, tsum(mul(sl, targets.side_mask * (cfg.lambda_side / n_side))))
    return total
