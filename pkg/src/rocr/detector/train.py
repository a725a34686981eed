from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..config import TrainConfig
from ..core import ParamSet
from ..metrics import aggregate_tiou
from ..raster import Raster, Rect
from ..training import TrainHistory, fit
from .detect import detect, input_scale, rescale, scale_rect
from .model import DetectorConfig, detector_forward, network_input
from .targets import Targets, assign_targets, detection_loss


@dataclass
class _Sample:
    image: Raster
    targets: Targets


def prepare_sample(img: Raster, gt: Sequence[Rect], cfg: DetectorConfig) -> _Sample:
    """Downscale like :func:`detect` does and precompute anchor targets."""
    scale = input_scale(img, cfg)
    work = rescale(img, scale)
    if scale != 1.0:
        sx, sy = work.width / img.width, work.height / img.height
        gt = [scale_rect(r, sx, sy) for r in gt]
    h, w = network_input(work, cfg).shape
    grid = (h // cfg.stride, w // cfg.stride)
    return _Sample(work, assign_targets(gt, grid, cfg))


def evaluate_detector(params: ParamSet, data: Sequence[tuple[Raster, Sequence[Rect]]], cfg: DetectorConfig):
    return aggregate_tiou([(list(gt), [l.rect for l in detect(img, params, cfg)]) for img, gt in data])


def train_detector(dataset: Sequence[tuple[Raster, Sequence[Rect]]], params: ParamSet, train_cfg: TrainConfig,
                   cfg: DetectorConfig, val: Sequence[tuple[Raster, Sequence[Rect]]] | None = None,
                   target: float | None = None, time_limit: float | None = None,
                   ) -> tuple[ParamSet, TrainHistory]:
    """Minibatch SGD on the detection loss; keeps the best validation TIOU Hmean.

    ``params`` is updated in place; the returned set holds the selected weights.
    """
    if not dataset:
        raise ValueError("cannot train a detector on an empty dataset")
    samples = [prepare_sample(img, gt, cfg) for img, gt in dataset]

    def loss_fn(sample: _Sample, ps: ParamSet):
        return detection_loss(detector_forward(sample.image, ps, cfg), sample.targets, cfg)

    evaluate = (lambda ps: evaluate_detector(ps, val, cfg).hmean) if val else None
    return fit(params, samples, loss_fn, train_cfg, evaluate, target=target, time_limit=time_limit)
