"""Attention encoder-decoder line recognizer with a DenseNet-style encoder."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..core import (ParamSet, ShapeError, Tensor, add, avg_pool2d, concat, conv2d, index, linear,
                    log_softmax, lstm_step, matmul, relu, reshape, softmax, stack, tanh, tmean, transpose)
from ..core.tensor import neg
from ..raster import Raster, pad_to_multiple, resize
from .vocab import TokenSeq, Vocab

BLOCKS = 3


@dataclass(frozen=True)
class RecognizerConfig:
    line_height: int = 32
    blocks: int = BLOCKS
    growth: int = 8
    depth: int = 4
    embed_dim: int = 64
    decoder_hidden: int = 128
    attention_dim: int = 64
    max_decode_len: int = 80

    def __post_init__(self):
        if self.blocks != BLOCKS:
            raise ValueError("the encoder always has 3 dense blocks")
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.line_height % 8:
            raise ValueError("line_height must be a multiple of 8")

    @classmethod
    def desk(cls, **kw) -> "RecognizerConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "RecognizerConfig":
        base = dict(growth=24, depth=16)
        base.update(kw)
        return cls(**base)

    @property
    def stem_channels(self) -> int:
        return 2 * self.growth

    def block_channels(self) -> list[tuple[int, int, int]]:
        """(channels in, channels after concatenation, channels after transition) per block."""
        out = []
        c = self.stem_channels
        for _ in range(self.blocks):
            grown = c + self.depth * self.growth
            out.append((c, grown, grown // 2))
            c = grown // 2
        return out

    @property
    def feature_dim(self) -> int:
        return self.block_channels()[-1][2] * (self.line_height // 8)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RecognizerConfig":
        return cls(**d)


def init_recognizer(cfg: RecognizerConfig, vocab_size: int, seed: int = 0) -> ParamSet:
    rng = np.random.default_rng(seed)
    ps = ParamSet()

    def conv(name, c_out, c_in, k):
        ps[f"{name}.w"] = rng.normal(0, math.sqrt(2.0 / (c_in * k * k)), (c_out, c_in, k, k))
        ps[f"{name}.b"] = np.zeros(c_out)

    def dense(name, n_out, n_in, scale=None):
        s = scale if scale is not None else 1.0 / math.sqrt(n_in)
        ps[f"{name}.w"] = rng.uniform(-s, s, (n_out, n_in))
        ps[f"{name}.b"] = np.zeros(n_out)

    conv("enc.stem", cfg.stem_channels, 1, 3)
    for b, (c_in, grown, c_out) in enumerate(cfg.block_channels()):
        for j in range(cfg.depth):
            conv(f"enc.b{b}.l{j}", cfg.growth, c_in + j * cfg.growth, 3)
        conv(f"enc.t{b}", c_out, grown, 1)
    f, u, a, e = cfg.feature_dim, cfg.decoder_hidden, cfg.attention_dim, cfg.embed_dim
    dense("dec.init_h", u, f)
    dense("dec.init_c", u, f)
    ps["dec.embed"] = rng.normal(0, 0.1, (vocab_size, e))
    ps["dec.att.wh"] = rng.uniform(-1 / math.sqrt(u), 1 / math.sqrt(u), (a, u))
    ps["dec.att.wf"] = rng.uniform(-1 / math.sqrt(f), 1 / math.sqrt(f), (a, f))
    ps["dec.att.v"] = rng.uniform(-1 / math.sqrt(a), 1 / math.sqrt(a), a)
    bound = 1 / math.sqrt(u)
    ps["dec.lstm.w_ih"] = rng.uniform(-bound, bound, (4 * u, e + f))
    ps["dec.lstm.w_hh"] = rng.uniform(-bound, bound, (4 * u, u))
    lstm_b = np.zeros(4 * u)
    lstm_b[u:2 * u] = 1.0
    ps["dec.lstm.b"] = lstm_b
    dense("dec.out", vocab_size, u + f)
    return ps


def normalize_line(img: Raster, cfg: RecognizerConfig) -> Raster:
    """Scale to ``line_height`` rows keeping the aspect ratio, then invert so ink is 1."""
    if img.width < 1 or img.height < 1:
        raise ShapeError("cannot normalize an empty line image")
    width = max(8, round(img.width * cfg.line_height / img.height))
    return Raster(1.0 - resize(img, width, cfg.line_height).pixels)


def dense_block(x: Tensor, params: ParamSet, cfg: RecognizerConfig, b: int) -> Tensor:
    feats = [x]
    for j in range(cfg.depth):
        inp = feats[0] if len(feats) == 1 else concat(feats, axis=0)
        feats.append(relu(conv2d(inp, params[f"enc.b{b}.l{j}.w"], params[f"enc.b{b}.l{j}.b"], pad=1)))
    out = concat(feats, axis=0)
    expected = x.shape[0] + cfg.depth * cfg.growth
    if out.shape[0] != expected:
        raise ShapeError(f"dense block {b}: {out.shape[0]} channels, expected {expected}")
    return out


def encode_features(line: Raster, params: ParamSet, cfg: RecognizerConfig) -> Tensor:
    """Feature sequence [L, F] for a normalized line; L = ceil(width / 8) columns."""
    if line.height != cfg.line_height:
        raise ShapeError(f"line height {line.height} != {cfg.line_height}; normalize first")
    if line.width < 8:
        raise ShapeError(f"line width {line.width} below 8 px")
    x = Tensor(pad_to_multiple(line, 8, 0.0).pixels[None])
    x = relu(conv2d(x, params["enc.stem.w"], params["enc.stem.b"], pad=1))
    for b in range(cfg.blocks):
        x = dense_block(x, params, cfg, b)
        x = avg_pool2d(conv2d(x, params[f"enc.t{b}.w"], params[f"enc.t{b}.b"]))
    c, h, w = x.shape
    return reshape(transpose(x, (2, 0, 1)), (w, c * h))


def attention_keys(features: Tensor, params: ParamSet) -> Tensor:
    """W_f f_i for every position; independent of the decoder state so computed once per line."""
    return matmul(features, transpose(params["dec.att.wf"]))


def attend(h: Tensor, features: Tensor, params: ParamSet, keys: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Additive attention: e_i = v . tanh(W_h h + W_f f_i); returns (context, weights)."""
    if features.shape[0] < 1:
        raise ShapeError("attention needs at least one feature position")
    if keys is None:
        keys = attention_keys(features, params)
    e = matmul(tanh(add(keys, linear(h, params["dec.att.wh"]))), params["dec.att.v"])
    alpha = softmax(e)
    return matmul(alpha, features), alpha


def init_decoder(features: Tensor, params: ParamSet) -> tuple[Tensor, Tensor]:
    fbar = feature_mean(features)
    return (tanh(linear(fbar, params["dec.init_h.w"], params["dec.init_h.b"])),
            tanh(linear(fbar, params["dec.init_c.w"], params["dec.init_c.b"])))


def feature_mean(features: Tensor) -> Tensor:
    n = features.shape[0]
    return matmul(Tensor(np.full(n, 1.0 / n)), features)


def _step(prev: int, h: Tensor, c: Tensor, features: Tensor, params: ParamSet, keys: Tensor):
    ctx, alpha = attend(h, features, params, keys)
    x = concat([index(params["dec.embed"], int(prev)), ctx])
    h2, c2 = lstm_step(x, h, c, (params["dec.lstm.w_ih"], params["dec.lstm.w_hh"], params["dec.lstm.b"]))
    return h2, c2, ctx, alpha


def output_logits(h: Tensor, ctx: Tensor, params: ParamSet) -> Tensor:
    return linear(concat([h, ctx], axis=-1), params["dec.out.w"], params["dec.out.b"])


def decode_step(prev: int, h: Tensor, c: Tensor, features: Tensor, params: ParamSet,
                keys: Tensor | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """One decoder step; returns (distribution over the vocabulary, h', c')."""
    if not 0 <= prev < params["dec.embed"].shape[0]:
        raise IndexError(f"symbol index {prev} outside the vocabulary")
    if keys is None:
        keys = attention_keys(features, params)
    h2, c2, ctx, _ = _step(prev, h, c, features, params, keys)
    return softmax(output_logits(h2, ctx, params)), h2, c2


def recognize_normalized(line: Raster, params: ParamSet, cfg: RecognizerConfig, vocab: Vocab,
                         allow_handwriting: bool = True) -> TokenSeq:
    feats = encode_features(line, params, cfg)
    keys = attention_keys(feats, params)
    h, c = init_decoder(feats, params)
    prev = vocab.sos
    ids: list[int] = []
    banned = [vocab.sos, vocab.pad, vocab.handwriting]
    for t in range(cfg.max_decode_len + 1):
        dist, h, c = decode_step(prev, h, c, feats, params, keys)
        p = dist.data.copy()
        if allow_handwriting and t == 0:
            p[[vocab.sos, vocab.pad]] = -np.inf
        else:
            p[banned] = -np.inf
        if t == cfg.max_decode_len:
            p[:len(vocab.symbols)] = -np.inf  # only the end marker may follow a full-length output
        sym = int(np.argmax(p))                # first maximum: lowest index wins ties
        if sym == vocab.eos:
            return TokenSeq(tuple(ids), True, False)
        if sym == vocab.handwriting:
            return TokenSeq((), False, True)
        ids.append(sym)
        prev = sym
    return TokenSeq(tuple(ids), False, False)


def recognize_line(line: Raster, params: ParamSet, cfg: RecognizerConfig, vocab: Vocab,
                   allow_handwriting: bool = True) -> TokenSeq:
    """Greedy decoding of a raw (paper-white) line image.

    With ``allow_handwriting`` off the sentinel is never emitted, so every
    line receives a printable transcript.
    """
    return recognize_normalized(normalize_line(line, cfg), params, cfg, vocab, allow_handwriting)


def sequence_loss(line: Raster, target: TokenSeq, params: ParamSet, cfg: RecognizerConfig, vocab: Vocab) -> Tensor:
    """Teacher-forced mean cross-entropy for an already normalized line."""
    tgt = target.targets(vocab)
    feats = encode_features(line, params, cfg)
    keys = attention_keys(feats, params)
    h, c = init_decoder(feats, params)
    prev = vocab.sos
    outs = []
    for sym in tgt:
        h, c, ctx, _ = _step(prev, h, c, feats, params, keys)
        outs.append(concat([h, ctx]))
        prev = sym
    logits = linear(stack(outs, axis=0), params["dec.out.w"], params["dec.out.b"])
    picked = index(log_softmax(logits, axis=-1), (np.arange(len(tgt)), np.asarray(tgt)))
    return neg(tmean(picked))


def recognition_loss(line: Raster, target: TokenSeq, params: ParamSet, cfg: RecognizerConfig, vocab: Vocab) -> Tensor:
    return sequence_loss(normalize_line(line, cfg), target, params, cfg, vocab)
