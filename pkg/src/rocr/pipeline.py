"""End-to-end receipt OCR: optional receipt extraction, detection, recognition, optional verification."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import CheckpointError, ParamSet, ShapeError
from .detector import DetectorConfig, detect, init_detector
from .metrics import EvalReport, aggregate_tiou, aggregate_word_f1
from .preprocess import PreprocessConfig, extract_receipt_region
from .raster import Raster, Rect, crop, save_overlay
from .recognizer import RecognizerConfig, Vocab, init_recognizer, transcribe_lines
from .synth.generate import Annotation


@dataclass(frozen=True)
class ResultLine:
    rect: Rect
    transcript: str
    score: float
    verified: bool


@dataclass
class PipelineResult:
    image_id: str
    applied_preprocess: Rect | None
    lines: list[ResultLine]
    removed: list[ResultLine] = field(default_factory=list)  # dropped by verification

    def to_text(self, with_transcripts: bool = True) -> str:
        if with_transcripts:
            return "".join(f"{l.rect.x0},{l.rect.y0},{l.rect.x1},{l.rect.y1}\t{l.transcript}\n" for l in self.lines)
        return "".join(f"{l.rect.x0},{l.rect.y0},{l.rect.x1},{l.rect.y1},{l.score:.4f}\n" for l in self.lines)


class ConfigMismatchError(CheckpointError, ShapeError):
    """A checkpoint whose parameter names or shapes disagree with the configuration."""


def check_compatible(params: ParamSet, reference: ParamSet, what: str) -> None:
    try:
        params.check_shapes(reference)
    except CheckpointError as exc:
        raise ConfigMismatchError(f"{what} checkpoint does not match its configuration: {exc}") from exc


@dataclass
class Pipeline:
    det_params: ParamSet
    det_cfg: DetectorConfig
    rec_params: ParamSet | None = None
    rec_cfg: RecognizerConfig | None = None
    vocab: Vocab | None = None
    pre_cfg: PreprocessConfig = field(default_factory=PreprocessConfig)

    def __post_init__(self):
        check_compatible(self.det_params, init_detector(self.det_cfg, 0), "detector")
        if self.rec_params is not None:
            if self.rec_cfg is None or self.vocab is None:
                raise ValueError("a recognizer checkpoint needs its config and vocabulary")
            check_compatible(self.rec_params, init_recognizer(self.rec_cfg, len(self.vocab), 0), "recognizer")

    def run(self, image: Raster, preprocess: bool = False, verify: bool = False, image_id: str = "") -> PipelineResult:
        return run_pipeline(image, self, preprocess=preprocess, verify=verify, image_id=image_id)


def run_pipeline(image: Raster, pipe: Pipeline, preprocess: bool = False, verify: bool = False,
                 image_id: str = "") -> PipelineResult:
    """Detect (and, with a recognizer, transcribe) text lines; coordinates refer to ``image``."""
    if verify and pipe.rec_params is None:
        raise ValueError("verification needs a recognizer")
    region = extract_receipt_region(image, pipe.pre_cfg) if preprocess else None
    work = crop(image, region) if region is not None else image
    lines = detect(work, pipe.det_params, pipe.det_cfg)
    removed = []
    if pipe.rec_params is not None:
        lines, removed = transcribe_lines(lines, work, pipe.rec_params, pipe.rec_cfg, pipe.vocab, verify)
    dx, dy = (region.x0, region.y0) if region is not None else (0, 0)

    def out(l):
        return ResultLine(l.rect.translate(dx, dy), l.text, l.score, l.verified)

    return PipelineResult(image_id, region, [out(l) for l in lines], [out(l) for l in removed])


CONDITIONS = {
    "detector": dict(preprocess=False, verify=False),
    "preprocess + detector": dict(preprocess=True, verify=False),
    "preprocess + detector + verification": dict(preprocess=True, verify=True),
}


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ROCR_THREADS", "1")))
    except ValueError:
        return 1


def run_many(images: Sequence[tuple[str, Raster]], pipe: Pipeline, preprocess: bool, verify: bool) -> list[PipelineResult]:
    """Run the pipeline over many images; results come back in input order."""
    n = worker_count()
    if n == 1 or len(images) < 2:
        return [run_pipeline(img, pipe, preprocess, verify, iid) for iid, img in images]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda item: run_pipeline(item[1], pipe, preprocess, verify, item[0]), images))


def evaluation_gt(annotations: Sequence[Annotation]) -> list[tuple[Rect, str]]:
    """Printed lines only: handwriting is not text to be read."""
    return [(a.rect, a.transcript) for a in annotations if a.style == "printed"]


def evaluate_results(results: Sequence[PipelineResult], gt: Mapping[str, Sequence[Annotation]],
                     ) -> tuple[EvalReport, EvalReport]:
    """(detection TIOU report, end-to-end word report) for one condition."""
    missing = [r.image_id for r in results if r.image_id not in gt]
    if missing or len(results) != len(gt):
        extra = sorted(set(gt) - {r.image_id for r in results})
        raise KeyError(f"result/ground-truth id mismatch: unmatched results {missing}, unmatched gt {extra}")
    det_pairs, word_docs = [], []
    for r in results:
        items = evaluation_gt(gt[r.image_id])
        det_pairs.append(([rect for rect, _ in items], [l.rect for l in r.lines]))
        word_docs.append((items, [(l.rect, l.transcript) for l in r.lines]))
    return aggregate_tiou(det_pairs), aggregate_word_f1(word_docs)


def format_grid(rows: Sequence[tuple[str, EvalReport]], score_name: str) -> str:
    width = max([len("Method")] + [len(name) for name, _ in rows])
    out = [f"{'Method':<{width}}\tRecall\tPrecision\t{score_name}"]
    for name, rep in rows:
        out.append(f"{name:<{width}}\t{100 * rep.recall:.1f}\t{100 * rep.precision:.1f}\t{100 * rep.hmean:.1f}")
    return "\n".join(out) + "\n"


def render_report(conditions: Mapping[str, Sequence[PipelineResult]], gt: Mapping[str, Sequence[Annotation]],
                  out_dir, images: Mapping[str, Raster] | None = None, with_words: bool = True,
                  ) -> dict[str, tuple[EvalReport, EvalReport]]:
    """Write detection/word grids, per-condition reports and overlays of the last condition."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = {name: evaluate_results(res, gt) for name, res in conditions.items()}
    text = "Text detection (TIOU)\n" + format_grid([(n, r[0]) for n, r in reports.items()], "Hmean")
    if with_words:
        text += "\nEnd-to-end recognition (words)\n" + format_grid([(n, r[1]) for n, r in reports.items()], "F1")
    (out / "report.txt").write_text(text)
    for i, (name, (det, word)) in enumerate(reports.items()):
        (out / f"condition{i}.det.txt").write_text(f"condition={name}\n" + det.to_kv())
        if with_words:
            (out / f"condition{i}.words.txt").write_text(f"condition={name}\n" + word.to_kv())
    if images is not None and conditions:
        odir = out / "overlays"
        odir.mkdir(exist_ok=True)
        last = list(conditions.values())[-1]
        for r in last:
            boxes = [l.rect for l in r.lines] + [(l.rect, "removed") for l in r.removed]
            (odir / f"{r.image_id}.ppm").write_bytes(save_overlay(images[r.image_id], boxes))
    return reports
