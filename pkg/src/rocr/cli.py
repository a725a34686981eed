"""Command-line interface: ``rocr <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 checkpoint error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import load_detector, load_recognizer, save_detector, save_recognizer
from .config import TrainConfig, apply_config, read_config_file
from .core import CheckpointError
from .detector import DetectorConfig, detect, format_detections, init_detector, parse_detections, train_detector
from .metrics import aggregate_tiou, aggregate_word_f1
from .pipeline import Pipeline, evaluation_gt, render_report, run_many
from .preprocess import NoReceiptError, PreprocessConfig
from .raster import FormatError, Raster, Rect, RegionError, crop, read_pgm, save_overlay
from .recognizer import (RecognizerConfig, Vocab, VocabError, init_recognizer, receipt_line_samples,
                         recognize_line, train_recognizer)
from .synth import (DatasetError, SynthConfig, UnsupportedCharacterError, generate_dataset, load_dataset,
                    save_dataset, split_dataset)
from .synth.dataset import read_manifest

EXIT_USAGE, EXIT_DATA, EXIT_CHECKPOINT = 2, 3, 4
TRAIN_FIELDS = ("lr", "batch_size", "iterations", "eval_interval", "seed", "profile", "momentum", "clip_norm")

log = logging.getLogger("rocr")


class UsageError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------

def _pair(text: str) -> tuple[int, int]:
    lo, hi = (int(v) for v in text.split(","))
    return lo, hi


def train_config(args, recognizer: bool) -> TrainConfig:
    values = read_config_file(args.config) if args.config else {}
    profile = args.profile or values.get("profile", "desk")
    base = TrainConfig.recognizer_defaults(profile) if recognizer else TrainConfig.detector_defaults(profile)
    return apply_config(base, values).with_overrides(**{k: getattr(args, k, None) for k in TRAIN_FIELDS})


def detector_config(profile: str) -> DetectorConfig:
    return DetectorConfig.paper() if profile == "paper" else DetectorConfig.desk()


def recognizer_config(profile: str) -> RecognizerConfig:
    return RecognizerConfig.paper() if profile == "paper" else RecognizerConfig.desk()


def _load_split(data: str, split: str | None):
    if split and not (Path(data) / "manifest.txt").exists():
        raise DatasetError(f"{data}: no manifest.txt (run 'rocr split' first)")
    if split and split not in read_manifest(data):
        return []
    return load_dataset(data, synthetic=True, split=split)


def _images(paths) -> list[tuple[str, Raster]]:
    return [(Path(p).stem, read_pgm(p)) for p in paths]


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def parse_result_line(line: str, where: str) -> tuple[Rect, str]:
    """Either ``x0,y0,x1,y1<TAB>transcript`` or ``x0,y0,x1,y1,score``."""
    if "\t" in line:
        coords, _, transcript = line.partition("\t")
    else:
        coords, transcript = ",".join(line.split(",")[:4]), ""
    try:
        x0, y0, x1, y1 = (int(v) for v in coords.split(","))
        return Rect(x0, y0, x1, y1), transcript
    except ValueError:
        raise DatasetError(f"{where}: expected 'x0,y0,x1,y1<TAB>transcript' or 'x0,y0,x1,y1,score'") from None


def _read_results(directory, ids) -> dict[str, list[tuple[Rect, str]]]:
    out = {}
    for rid in ids:
        p = Path(directory) / f"{rid}.txt"
        if not p.exists():
            raise DatasetError(f"{directory}: missing result file for {rid}")
        lines = p.read_text(encoding="utf-8").splitlines()
        out[rid] = [parse_result_line(l, f"{p}:{i}") for i, l in enumerate(lines, 1) if l.strip()]
    return out


# -- subcommands -----------------------------------------------------------------

def cmd_gen(args) -> None:
    cfg = SynthConfig(seed=args.seed, handwriting_fraction=args.handwriting_fraction, noise=args.noise,
                      lines_range=args.lines, scale_range=args.scale,
                      canvas=(args.canvas_width, args.canvas_height) if args.canvas else None)
    items = generate_dataset(cfg, args.count, start=args.start)
    save_dataset(args.out, items)
    print(f"wrote {len(items)} receipts to {args.out}")


def cmd_split(args) -> None:
    items = load_dataset(args.data, synthetic=True)
    ratios = tuple(float(v) for v in args.ratios.split(","))
    train, val, test = split_dataset([it.id for it in items], ratios, seed=args.seed)
    save_dataset(args.data, [], {"train": train, "val": val, "test": test})
    print(f"train {len(train)}  val {len(val)}  test {len(test)}")


def cmd_train_det(args) -> None:
    tc = train_config(args, recognizer=False)
    cfg = detector_config(tc.profile)
    train = _load_split(args.data, args.train_split)
    val = _load_split(args.data, args.val_split) if args.val_split else []
    if not train:
        raise DatasetError(f"{args.data}: training split is empty")
    as_pairs = lambda items: [(r.image, [a.rect for a in r.annotations]) for r in items]
    params = init_detector(cfg, seed=tc.seed)
    best, hist = train_detector(as_pairs(train), params, tc, cfg, val=as_pairs(val) or None,
                                time_limit=args.max_minutes * 60 if args.max_minutes else None)
    save_detector(args.out, best, cfg)
    print(f"saved {args.out}: {len(hist.losses)} steps, best val hmean {hist.best_score:.4f} at step {hist.best_step}")


def cmd_train_rec(args) -> None:
    tc = train_config(args, recognizer=True)
    cfg = recognizer_config(tc.profile)
    train = _load_split(args.data, args.train_split)
    val = _load_split(args.data, args.val_split) if args.val_split else []
    if not train:
        raise DatasetError(f"{args.data}: training split is empty")
    # the label set covers validation text too, so every validation line is scoreable
    vocab = Vocab.from_texts(a.transcript for r in train + val for a in r.annotations if a.style == "printed")
    samples = receipt_line_samples(train, vocab)
    val_samples = receipt_line_samples(val, vocab) if val else None
    params = init_recognizer(cfg, len(vocab), seed=tc.seed)
    best, hist = train_recognizer(samples, params, tc, cfg, vocab, val=val_samples,
                                  time_limit=args.max_minutes * 60 if args.max_minutes else None)
    save_recognizer(args.out, best, cfg, vocab)
    print(f"saved {args.out}: {len(hist.losses)} steps, best val accuracy {hist.best_score:.4f} at step {hist.best_step}")


def cmd_detect(args) -> None:
    params, cfg = load_detector(args.det)
    Pipeline(params, cfg)  # validates checkpoint against config
    for iid, img in _images(args.images):
        text = format_detections(detect(img, params, cfg))
        _write(str(Path(args.out) / f"{iid}.txt") if args.out else None, text)


def cmd_recognize(args) -> None:
    params, cfg, vocab = load_recognizer(args.rec)
    img = read_pgm(args.image)
    if args.boxes:
        rects = [r for r, _ in parse_detections(Path(args.boxes).read_text(encoding="utf-8"))]
        out = []
        for r in rects:
            seq = recognize_line(crop(img, r), params, cfg, vocab, allow_handwriting=args.verify)
            if not seq.is_handwriting:
                out.append(f"{r.x0},{r.y0},{r.x1},{r.y1}\t{seq.text(vocab)}\n")
        _write(args.out, "".join(out))
    else:
        seq = recognize_line(img, params, cfg, vocab, allow_handwriting=True)
        _write(args.out, "<handwriting>\n" if seq.is_handwriting else seq.text(vocab) + "\n")


def _pipeline(args) -> Pipeline:
    det, det_cfg = load_detector(args.det)
    rec = rec_cfg = vocab = None
    if args.rec:
        rec, rec_cfg, vocab = load_recognizer(args.rec)
    pre = PreprocessConfig(margin=args.margin, run_threshold=args.run_threshold)
    return Pipeline(det, det_cfg, rec, rec_cfg, vocab, pre)


def cmd_pipeline(args) -> None:
    pipe = _pipeline(args)
    if args.verify and pipe.rec_params is None:
        raise UsageError("--verify needs --rec")
    if args.data:
        items = _load_split(args.data, args.split)
        images = [(r.id, r.image) for r in items]
    else:
        images = _images(args.images)
    results = run_many(images, pipe, args.preprocess, args.verify)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        (out / f"{res.image_id}.txt").write_text(res.to_text(with_transcripts=pipe.rec_params is not None))
        if res.applied_preprocess is not None:
            r = res.applied_preprocess
            (out / f"{res.image_id}.region").write_text(f"{r.x0},{r.y0},{r.x1},{r.y1}\n")
    print(f"wrote {len(results)} result files to {out}")


def cmd_report(args) -> None:
    pipe = _pipeline(args)
    items = _load_split(args.data, args.split)
    images = [(r.id, r.image) for r in items]
    gt = {r.id: r.annotations for r in items}
    conditions = {"detector": run_many(images, pipe, False, False),
                  "preprocess + detector": run_many(images, pipe, True, False)}
    if pipe.rec_params is not None:
        conditions["preprocess + detector + verification"] = run_many(images, pipe, True, True)
    render_report(conditions, gt, args.out, dict(images), with_words=pipe.rec_params is not None)
    print((Path(args.out) / "report.txt").read_text(), end="")


def cmd_eval(args, words: bool) -> None:
    items = _load_split(args.data, args.split)
    results = _read_results(args.results, [r.id for r in items])
    docs = [(evaluation_gt(r.annotations), results[r.id]) for r in items]
    if words:
        rep = aggregate_word_f1(docs, case_sensitive=not args.ignore_case)
    else:
        rep = aggregate_tiou([([g for g, _ in gt], [d for d, _ in det]) for gt, det in docs])
    _write(args.out, rep.to_text() if args.verbose else rep.to_kv())


def cmd_overlay(args) -> None:
    img = read_pgm(args.image)
    boxes = [r for r, _ in parse_detections(Path(args.boxes).read_text(encoding="utf-8"))]
    removed = []
    if args.removed:
        removed = [(r, "removed") for r, _ in parse_detections(Path(args.removed).read_text(encoding="utf-8"))]
    Path(args.out).write_bytes(save_overlay(img, boxes + removed))


# -- parser ----------------------------------------------------------------------

def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--train-split", default="train")
    p.add_argument("--val-split", default="val")
    p.add_argument("--config", help="file of 'key = value' training settings (flags win)")
    p.add_argument("--profile", choices=("desk", "paper"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--max-minutes", type=float, help="stop training after this wall-clock budget")


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--det", required=True, help="detector checkpoint")
    p.add_argument("--rec", help="recognizer checkpoint")
    p.add_argument("--margin", type=int, default=PreprocessConfig.margin)
    p.add_argument("--run-threshold", type=float, default=PreprocessConfig.run_threshold)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rocr", description="Receipt text detection and recognition.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic receipt dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--handwriting-fraction", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--lines", type=_pair, default=(5, 8), help="lines per receipt, LO,HI")
    p.add_argument("--scale", type=_pair, default=(2, 2), help="font scale range, LO,HI")
    p.add_argument("--canvas", action="store_true", help="paste receipts onto a larger dark canvas")
    p.add_argument("--canvas-width", type=_pair, default=(420, 520))
    p.add_argument("--canvas-height", type=_pair, default=(360, 460))
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("split", help="write a seeded train/val/test manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train-det", help="train the text detector")
    _train_flags(p)
    p.set_defaults(fn=cmd_train_det)

    p = sub.add_parser("train-rec", help="train the line recognizer (handwriting lines get the sentinel)")
    _train_flags(p)
    p.set_defaults(fn=cmd_train_rec)

    p = sub.add_parser("detect", help="detect text lines; one 'x0,y0,x1,y1,score' line per text line")
    p.add_argument("--det", required=True)
    p.add_argument("--out", help="directory for <id>.txt files (default: stdout)")
    p.add_argument("images", nargs="+")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("recognize", help="recognize a line image, or the boxes of a detection file")
    p.add_argument("--rec", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", help="detection file for --image")
    p.add_argument("--verify", action="store_true", help="drop boxes recognized as handwriting")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_recognize)

    p = sub.add_parser("pipeline", help="run detection (+ recognition) over images or a dataset split")
    _pipeline_flags(p)
    p.add_argument("--preprocess", action="store_true", help="crop to the receipt region first")
    p.add_argument("--verify", action="store_true", help="remove lines recognized as handwriting")
    p.add_argument("--data")
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("images", nargs="*")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("report", help="evaluate all pipeline conditions and write a grid report with overlays")
    _pipeline_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    for name, words in (("eval-det", False), ("eval-e2e", True)):
        p = sub.add_parser(name, help="TIOU detection evaluation" if not words else "end-to-end word evaluation")
        p.add_argument("--data", required=True)
        p.add_argument("--split")
        p.add_argument("--results", required=True, help="directory of <id>.txt result files")
        p.add_argument("--out")
        p.add_argument("--ignore-case", action="store_true")
        p.add_argument("--verbose", action="store_true", help="include per-match records")
        p.set_defaults(fn=lambda a, w=words: cmd_eval(a, w))

    p = sub.add_parser("overlay", help="draw detection boxes on an image (PPM output)")
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", required=True)
    p.add_argument("--removed", help="detection file of boxes removed by verification (drawn dashed)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_overlay)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "pipeline" and not args.data and not args.images:
        parser.error("pipeline needs --data or image paths")
    try:
        args.fn(args)
    except UsageError as exc:
        print(f"rocr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"rocr: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (FormatError, DatasetError, VocabError, NoReceiptError, RegionError, UnsupportedCharacterError,
            FileNotFoundError, IsADirectoryError, KeyError, ValueError) as exc:
        print(f"rocr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
