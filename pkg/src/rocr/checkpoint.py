"""Model checkpoints: RKPT weights plus a JSON sidecar with the model config (and vocabulary)."""
from __future__ import annotations

import json
from pathlib import Path

from .core import CheckpointError, ParamSet
from .detector import DetectorConfig
from .recognizer import RecognizerConfig, Vocab


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _vocab_path(path) -> Path:
    return Path(str(path) + ".vocab")


def _read_meta(path, kind: str) -> dict:
    try:
        meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"{path}: missing config sidecar {_sidecar(path).name}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{_sidecar(path)}: invalid JSON ({exc})") from None
    if meta.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {meta.get('kind')!r}")
    return meta


def save_detector(path, params: ParamSet, cfg: DetectorConfig) -> None:
    params.save(path)
    _sidecar(path).write_text(json.dumps({"kind": "detector", "config": cfg.to_dict()}, indent=1, sort_keys=True))


def load_detector(path) -> tuple[ParamSet, DetectorConfig]:
    meta = _read_meta(path, "detector")
    try:
        cfg = DetectorConfig.from_dict(meta["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{_sidecar(path)}: bad detector config ({exc})") from None
    return ParamSet.load(path), cfg


def save_recognizer(path, params: ParamSet, cfg: RecognizerConfig, vocab: Vocab) -> None:
    params.save(path)
    _sidecar(path).write_text(json.dumps({"kind": "recognizer", "config": cfg.to_dict()}, indent=1, sort_keys=True))
    vocab.save(_vocab_path(path))


def load_recognizer(path) -> tuple[ParamSet, RecognizerConfig, Vocab]:
    meta = _read_meta(path, "recognizer")
    try:
        cfg = RecognizerConfig.from_dict(meta["config"])
        vocab = Vocab.load(_vocab_path(path))
    except FileNotFoundError:
        raise CheckpointError(f"{path}: missing vocabulary {_vocab_path(path).name}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad recognizer metadata ({exc})") from None
    return ParamSet.load(path), cfg, vocab
