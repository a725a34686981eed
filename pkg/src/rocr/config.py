"""Training configuration and ``key = value`` config files."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 8
    iterations: int = 3000
    eval_interval: int = 100
    seed: int = 1
    profile: str = "desk"
    momentum: float = 0.9
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.iterations < 0 or self.eval_interval < 1:
            raise ValueError("lr must be >= 0; batch_size, eval_interval >= 1; iterations >= 0")
        if self.profile not in ("desk", "paper"):
            raise ValueError(f"profile must be 'desk' or 'paper', got {self.profile!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @classmethod
    def detector_defaults(cls, profile: str = "desk", **kw) -> "TrainConfig":
        base = dict(iterations=50_000 if profile == "paper" else 3000, profile=profile)
        base.update(kw)
        return cls(**base)

    @classmethod
    def recognizer_defaults(cls, profile: str = "desk", **kw) -> "TrainConfig":
        base = dict(iterations=2000, profile=profile)
        base.update(kw)
        return cls(**base)

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _coerce(raw: str, current):
    if raw.lower() in ("none", "null"):
        return None
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    try:
        return int(raw)
    except ValueError:
        try:
            return float(raw)
        except ValueError:
            return raw


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def apply_config(cfg, values: dict[str, str]):
    """Return a copy of a dataclass config with matching keys replaced."""
    names = {f.name for f in fields(cfg)}
    updates = {k: _coerce(v, getattr(cfg, k)) for k, v in values.items() if k in names}
    return replace(cfg, **updates)
