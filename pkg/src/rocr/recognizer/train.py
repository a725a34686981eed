from __future__ import annotations

from dataclasses import replace
from typing import Sequence

from ..config import TrainConfig
from ..core import ParamSet
from ..detector.lines import TextLine
from ..raster import Raster, crop
from ..training import TrainHistory, fit
from .model import RecognizerConfig, normalize_line, recognize_normalized, sequence_loss
from .vocab import TokenSeq, Vocab


def exact_match_accuracy(params: ParamSet, data: Sequence[tuple[Raster, TokenSeq]], cfg: RecognizerConfig,
                         vocab: Vocab, normalized: bool = False) -> float:
    if not data:
        return 0.0
    hits = 0
    for img, target in data:
        line = img if normalized else normalize_line(img, cfg)
        out = recognize_normalized(line, params, cfg, vocab)
        hits += out.ids == target.ids and out.is_handwriting == target.is_handwriting
    return hits / len(data)


def train_recognizer(dataset: Sequence[tuple[Raster, TokenSeq]], params: ParamSet, train_cfg: TrainConfig,
                     cfg: RecognizerConfig, vocab: Vocab, val: Sequence[tuple[Raster, TokenSeq]] | None = None,
                     target: float | None = None, time_limit: float | None = None,
                     ) -> tuple[ParamSet, TrainHistory]:
    """Teacher-forced SGD; keeps the parameters with the best validation exact-sequence accuracy."""
    if not dataset:
        raise ValueError("cannot train a recognizer on an empty dataset")
    samples = [(normalize_line(img, cfg), seq) for img, seq in dataset]
    for _, seq in samples:
        seq.targets(vocab)  # reject malformed targets before training starts
    val_norm = [(normalize_line(img, cfg), seq) for img, seq in val] if val else None

    def loss_fn(sample, ps):
        return sequence_loss(sample[0], sample[1], ps, cfg, vocab)

    evaluate = (lambda ps: exact_match_accuracy(ps, val_norm, cfg, vocab, normalized=True)) if val_norm else None
    return fit(params, samples, loss_fn, train_cfg, evaluate, target=target, time_limit=time_limit)


def line_image(image: Raster, line: TextLine) -> Raster:
    return crop(image, line.rect)


def transcribe_lines(lines: Sequence[TextLine], image: Raster, params: ParamSet, cfg: RecognizerConfig,
                     vocab: Vocab, verify: bool) -> tuple[list[TextLine], list[TextLine]]:
    """Recognize every line; returns (kept, removed).

    With ``verify`` the handwriting sentinel is allowed and such lines are
    removed; without it every line is kept with a printable transcript.
    """
    kept, removed = [], []
    for line in lines:
        seq = recognize_normalized(normalize_line(line_image(image, line), cfg), params, cfg, vocab,
                                   allow_handwriting=verify)
        out = replace(line, transcript=seq, text=seq.text(vocab), verified=verify)
        (removed if seq.is_handwriting else kept).append(out)
    return kept, removed


def verify_lines(lines: Sequence[TextLine], image: Raster, params: ParamSet, cfg: RecognizerConfig,
                 vocab: Vocab) -> list[TextLine]:
    """Drop lines recognized as handwriting and attach transcripts to the rest, preserving order."""
    return transcribe_lines(lines, image, params, cfg, vocab, verify=True)[0]


def receipt_line_samples(receipts, vocab: Vocab) -> list[tuple[Raster, TokenSeq]]:
    """Crop every annotated line; handwriting lines get the sentinel target."""
    out = []
    for rec in receipts:
        for a in rec.annotations:
            seq = TokenSeq.handwriting_line() if a.style != "printed" else TokenSeq.from_text(a.transcript, vocab)
            out.append((crop(rec.image, a.rect), seq))
    return out
