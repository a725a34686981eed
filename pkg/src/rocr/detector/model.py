"""CTPN-style detection network: conv backbone, per-row BLSTM over 3x3 windows, three heads."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ParamSet, ShapeError, Tensor, bilstm, conv2d, linear, max_pool2d, relu, sigmoid, unfold3x3
from ..core.tensor import reshape, transpose
from ..raster import Raster, pad_to_multiple

CTPN_HEIGHTS = (11, 16, 23, 33, 47, 67, 96, 137, 196, 273)


def scaled_heights(stride: int) -> tuple[float, ...]:
    return tuple(h * stride / 16 for h in CTPN_HEIGHTS)


@dataclass(frozen=True)
class DetectorConfig:
    stride: int = 8
    anchor_heights: tuple[float, ...] = field(default_factory=lambda: scaled_heights(8))
    channels: tuple[tuple[int, ...], ...] = ((16,), (32,), (48,))
    lstm_hidden: int = 32
    fc_dim: int = 96
    score_threshold: float = 0.7
    nms_iou: float = 0.5
    max_horizontal_gap: float = 50.0
    min_vertical_overlap: float = 0.7
    min_proposals_per_line: int = 2
    lambda_reg: float = 1.0
    lambda_side: float = 2.0
    max_side: int = 320  # inputs with a longer side are downscaled before detection

    def __post_init__(self):
        object.__setattr__(self, "anchor_heights", tuple(float(h) for h in self.anchor_heights))
        object.__setattr__(self, "channels", tuple(tuple(s) for s in self.channels))
        hs = self.anchor_heights
        if not hs or any(b <= a for a, b in zip(hs, hs[1:])) or hs[0] <= 0:
            raise ValueError("anchor_heights must be positive and strictly increasing")
        if self.stride != 2 ** len(self.channels):
            raise ValueError(f"stride {self.stride} needs {int(math.log2(self.stride))} pooling stages, "
                             f"channel plan has {len(self.channels)}")
        if self.min_proposals_per_line < 1:
            raise ValueError("min_proposals_per_line must be >= 1")

    @property
    def k(self) -> int:
        return len(self.anchor_heights)

    @classmethod
    def desk(cls, **kw) -> "DetectorConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "DetectorConfig":
        base = dict(stride=16, anchor_heights=CTPN_HEIGHTS,
                    channels=((64, 64), (128, 128), (256, 256, 256), (512, 512, 512)),
                    lstm_hidden=128, fc_dim=512, max_side=1200)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anchor_heights"] = list(self.anchor_heights)
        d["channels"] = [list(s) for s in self.channels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        return cls(**d)


@dataclass
class DetectionHead:
    """Raw network outputs on the H' x W' grid; ``scores`` are post-sigmoid."""

    logits: Tensor  # [H', W', k]
    reg: Tensor     # [H', W', 2k], pairs (v_c, v_h)
    side: Tensor    # [H', W', k]

    @property
    def grid(self) -> tuple[int, int]:
        return self.logits.shape[0], self.logits.shape[1]

    @property
    def scores(self) -> np.ndarray:
        return sigmoid(Tensor(self.logits.data)).data

    @property
    def v_c(self) -> np.ndarray:
        return self.reg.data[..., 0::2]

    @property
    def v_h(self) -> np.ndarray:
        return self.reg.data[..., 1::2]


def init_detector(cfg: DetectorConfig, seed: int = 0, prior: float = 0.02) -> ParamSet:
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    c_in = 1
    for s, stage in enumerate(cfg.channels):
        for j, c_out in enumerate(stage):
            ps[f"backbone.s{s}.c{j}.w"] = rng.normal(0, math.sqrt(2.0 / (9 * c_in)), (c_out, c_in, 3, 3))
            ps[f"backbone.s{s}.c{j}.b"] = np.zeros(c_out)
            c_in = c_out
    d = 9 * c_in
    u = cfg.lstm_hidden
    bound = 1.0 / math.sqrt(u)
    for direction in ("fwd", "bwd"):
        ps[f"rnn.{direction}.w_ih"] = rng.uniform(-bound, bound, (4 * u, d))
        ps[f"rnn.{direction}.w_hh"] = rng.uniform(-bound, bound, (4 * u, u))
        b = np.zeros(4 * u)
        b[u:2 * u] = 1.0  # forget gate open at start
        ps[f"rnn.{direction}.b"] = b
    ps["fc.w"] = rng.normal(0, math.sqrt(2.0 / (2 * u)), (cfg.fc_dim, 2 * u))
    ps["fc.b"] = np.zeros(cfg.fc_dim)
    k = cfg.k
    ps["head.score.w"] = rng.normal(0, 0.01, (k, cfg.fc_dim))
    ps["head.score.b"] = np.full(k, math.log(prior / (1 - prior)))
    ps["head.reg.w"] = rng.normal(0, 0.01, (2 * k, cfg.fc_dim))
    ps["head.reg.b"] = np.zeros(2 * k)
    ps["head.side.w"] = rng.normal(0, 0.01, (k, cfg.fc_dim))
    ps["head.side.b"] = np.zeros(k)
    return ps


def network_input(img: Raster, cfg: DetectorConfig) -> np.ndarray:
    """Pad with paper-white to stride multiples and invert so paper maps to 0."""
    if img.width < cfg.stride or img.height < cfg.stride:
        raise ShapeError(f"image {img.width}x{img.height} smaller than one {cfg.stride}px cell")
    padded = pad_to_multiple(img, cfg.stride, 1.0)
    return 1.0 - padded.pixels


def detector_forward(img: Raster, params: ParamSet, cfg: DetectorConfig) -> DetectionHead:
    x = Tensor(network_input(img, cfg)[None])
    for s, stage in enumerate(cfg.channels):
        for j in range(len(stage)):
            x = relu(conv2d(x, params[f"backbone.s{s}.c{j}.w"], params[f"backbone.s{s}.c{j}.b"], pad=1))
        x = max_pool2d(x)
    c, hp, wp = x.shape
    win = unfold3x3(x)                                   # [9C, H', W']
    seq = transpose(win, (2, 1, 0))                      # [W', H', 9C]: time runs along columns
    rnn = bilstm(seq, tuple(params[f"rnn.fwd.{n}"] for n in ("w_ih", "w_hh", "b")),
                 tuple(params[f"rnn.bwd.{n}"] for n in ("w_ih", "w_hh", "b")))
    flat = reshape(rnn, (wp * hp, 2 * cfg.lstm_hidden))
    hid = relu(linear(flat, params["fc.w"], params["fc.b"]))
    k = cfg.k

    def head(name, n):
        out = reshape(linear(hid, params[f"head.{name}.w"], params[f"head.{name}.b"]), (wp, hp, n))
        return transpose(out, (1, 0, 2))

    return DetectionHead(head("score", k), head("reg", 2 * k), head("side", k))
