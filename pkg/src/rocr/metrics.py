"""Detection (tightness-weighted IoU) and end-to-end word evaluation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .raster import Rect


@dataclass(frozen=True)
class MatchRecord:
    gt: int
    det: int
    iou: float
    match_gt: float
    match_dt: float


@dataclass(frozen=True)
class WordMatch:
    gt: int
    det: int
    correct: int
    predicted: int


@dataclass
class EvalReport:
    recall: float
    precision: float
    hmean: float
    num_gt: int
    num_dt: int
    records: list = field(default_factory=list)
    kind: str = "tiou"

    @property
    def f1(self) -> float:
        return self.hmean

    def triple(self) -> tuple[float, float, float]:
        return (self.recall, self.precision, self.hmean)

    def to_kv(self, swap_labels: bool = False) -> str:
        """``key=value`` lines; ``swap_labels`` prints each of recall/precision under the other's name,
        the convention some word-level tables use (correct/recognized called recall)."""
        r, p = (self.precision, self.recall) if swap_labels else (self.recall, self.precision)
        score = "hmean" if self.kind == "tiou" else "f1"
        lines = [f"kind={self.kind}", f"recall={r:.4f}", f"precision={p:.4f}", f"{score}={self.hmean:.4f}",
                 f"num_gt={self.num_gt}", f"num_dt={self.num_dt}"]
        return "\n".join(lines) + "\n"

    def to_text(self, swap_labels: bool = False) -> str:
        r, p = (self.precision, self.recall) if swap_labels else (self.recall, self.precision)
        score = "Hmean" if self.kind == "tiou" else "F1"
        out = [f"Evaluation: {self.kind}",
               f"Recall: {r:.4f}", f"Precision: {p:.4f}", f"{score}: {self.hmean:.4f}",
               f"Num_gt: {self.num_gt}", f"Num_dt: {self.num_dt}", ""]
        if self.kind == "tiou":
            out.append("gt\tdet\tiou\tmatch_gt\tmatch_dt")
            out += [f"{m.gt}\t{m.det}\t{m.iou:.4f}\t{m.match_gt:.4f}\t{m.match_dt:.4f}" for m in self.records]
        else:
            out.append("gt\tdet\tcorrect\tpredicted")
            out += [f"{m.gt}\t{m.det}\t{m.correct}\t{m.predicted}" for m in self.records]
        return "\n".join(out) + "\n"


def _inter_area(a: Rect, b: Rect) -> int:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    return w * h if w > 0 and h > 0 else 0


def iou(a: Rect, b: Rect) -> float:
    inter = _inter_area(a, b)
    return inter / (a.area + b.area - inter)


def harmonic_mean(recall: float, precision: float) -> float:
    if recall + precision == 0:
        return 0.0
    return 2 * recall * precision / (recall + precision)


def match_boxes(gt: Sequence[Rect], det: Sequence[Rect], iou_threshold: float = 0.5) -> list[MatchRecord]:
    """Greedy one-to-one matching by descending IoU.

    Each match is weighted by ground-truth completeness (``match_gt``) and
    detection compactness (``match_dt``).
    """
    cands = []
    for gi, g in enumerate(gt):
        for di, d in enumerate(det):
            inter = _inter_area(g, d)
            if inter == 0:
                continue
            v = inter / (g.area + d.area - inter)
            if v >= iou_threshold:
                cands.append((-v, gi, di, inter))
    cands.sort()
    used_g, used_d = set(), set()
    out = []
    for negv, gi, di, inter in cands:
        if gi in used_g or di in used_d:
            continue
        used_g.add(gi)
        used_d.add(di)
        v = -negv
        out.append(MatchRecord(gi, di, v, v * inter / gt[gi].area, v * inter / det[di].area))
    return out


def tiou_report(gt: Sequence[Rect], det: Sequence[Rect], threshold: float = 0.5) -> EvalReport:
    """Recall = sum(match_gt)/|gt|, precision = sum(match_dt)/|det|.

    An empty ground-truth set gives recall 1, an empty detection set precision 1.
    """
    records = match_boxes(gt, det, threshold)
    recall = sum(m.match_gt for m in records) / len(gt) if gt else 1.0
    if det:
        precision = sum(m.match_dt for m in records) / len(det)
    else:
        precision = 1.0
    if gt and not det:
        recall = 0.0
    if not gt and det:
        precision = 0.0
    return EvalReport(recall, precision, harmonic_mean(recall, precision), len(gt), len(det), records, "tiou")


def aggregate_tiou(pairs) -> EvalReport:
    """Pool several documents: sums of match scores over total counts."""
    num_gt = num_dt = 0
    sum_gt = sum_dt = 0.0
    records = []
    for gt, det in pairs:
        recs = match_boxes(gt, det)
        num_gt += len(gt)
        num_dt += len(det)
        sum_gt += sum(m.match_gt for m in recs)
        sum_dt += sum(m.match_dt for m in recs)
        records.extend(recs)
    recall = sum_gt / num_gt if num_gt else 1.0
    precision = sum_dt / num_dt if num_dt else 1.0
    if num_gt and not num_dt:
        recall = 0.0
    if not num_gt and num_dt:
        precision = 0.0
    return EvalReport(recall, precision, harmonic_mean(recall, precision), num_gt, num_dt, records, "tiou")


def _tokens(text: str, case_sensitive: bool) -> list[str]:
    return (text if case_sensitive else text.lower()).split()


def _word_counts(gt_items, pred_items, iou_threshold, case_sensitive):
    matches = match_boxes([r for r, _ in gt_items], [r for r, _ in pred_items], iou_threshold)
    by_det = {m.det: m.gt for m in matches}
    correct = 0
    records = []
    for di, (_, text) in enumerate(pred_items):
        words = _tokens(text, case_sensitive)
        hit = 0
        if di in by_det:
            pool = Counter(_tokens(gt_items[by_det[di]][1], case_sensitive))
            for w in words:
                if pool[w] > 0:
                    pool[w] -= 1
                    hit += 1
            records.append(WordMatch(by_det[di], di, hit, len(words)))
        correct += hit
    n_gt = sum(len(_tokens(t, case_sensitive)) for _, t in gt_items)
    n_pred = sum(len(_tokens(t, case_sensitive)) for _, t in pred_items)
    return correct, n_gt, n_pred, records


def _word_report(correct, n_gt, n_pred, records) -> EvalReport:
    precision = correct / n_pred if n_pred else 1.0
    recall = correct / n_gt if n_gt else 1.0
    if n_gt and not n_pred:
        recall = 0.0
    if n_pred and not n_gt:
        precision = 0.0
    return EvalReport(recall, precision, harmonic_mean(recall, precision), n_gt, n_pred, records, "word")


def word_f1(gt_items, pred_items, iou_threshold: float = 0.5, case_sensitive: bool = True) -> EvalReport:
    """Word-level recall/precision/F1 over (Rect, transcript) lines.

    A predicted word counts as correct only when its line box matched a
    ground-truth line and the word is still unconsumed in that line's tokens.
    """
    return _word_report(*_word_counts(gt_items, pred_items, iou_threshold, case_sensitive))


def aggregate_word_f1(docs, iou_threshold: float = 0.5, case_sensitive: bool = True) -> EvalReport:
    correct = n_gt = n_pred = 0
    records = []
    for gt_items, pred_items in docs:
        c, g, p, r = _word_counts(gt_items, pred_items, iou_threshold, case_sensitive)
        correct += c
        n_gt += g
        n_pred += p
        records.extend(r)
    return _word_report(correct, n_gt, n_pred, records)
