"""Named parameter collections and the RKPT checkpoint format.

Layout: ``b"RKPT"``, version byte ``1``, a UTF-8 manifest with one
``name f32 d0 d1 ...`` record per line, a ``\\0`` separator, then the
little-endian float32 arrays concatenated in manifest order.
"""
from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"RKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


class ParamSet(Mapping[str, Tensor]):
    """Trainable tensors keyed by unique name, iterated in lexicographic order."""

    def __init__(self, tensors: Mapping[str, Tensor] | None = None):
        self._t: dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self[name] = t

    def __setitem__(self, name: str, t) -> None:
        if name in self._t:
            raise KeyError(f"duplicate parameter {name!r}")
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"parameter names may not contain whitespace: {name!r}")
        if not isinstance(t, Tensor):
            t = Tensor(t)
        t.requires_grad = True
        t.name = name
        self._t[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._t))

    def __len__(self) -> int:
        return len(self._t)

    def zero_grad(self) -> None:
        for t in self._t.values():
            t.grad = np.zeros_like(t.data)

    def clear_grad(self) -> None:
        for t in self._t.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self._t.values())

    def copy(self) -> "ParamSet":
        return ParamSet({k: Tensor(self._t[k].data.copy()) for k in self})

    def state(self) -> dict[str, np.ndarray]:
        return {k: self._t[k].data.copy() for k in self}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for k in self:
            self._t[k].data = np.array(state[k], dtype=np.float64)

    # -- serialization ---------------------------------------------------------
    def to_bytes(self) -> bytes:
        lines = []
        blobs = []
        for name in self:
            arr = self._t[name].data
            lines.append(" ".join([name, "f32", *map(str, arr.shape)]))
            blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        manifest = "\n".join(lines).encode("utf-8")
        return MAGIC + bytes([VERSION]) + manifest + b"\0" + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ParamSet":
        if data[:4] != MAGIC:
            raise CheckpointError("not an RKPT checkpoint (bad magic)")
        if len(data) < 5 or data[4] != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {data[4] if len(data) > 4 else None}")
        sep = data.find(b"\0", 5)
        if sep < 0:
            raise CheckpointError("checkpoint manifest is not terminated")
        manifest = data[5:sep].decode("utf-8")
        pos = sep + 1
        out = cls()
        for lineno, line in enumerate(manifest.split("\n") if manifest else [], 1):
            parts = line.split()
            if len(parts) < 2 or parts[1] != "f32":
                raise CheckpointError(f"bad manifest record {lineno}: {line!r}")
            shape = tuple(int(d) for d in parts[2:])
            n = int(np.prod(shape, dtype=np.int64))
            end = pos + 4 * n
            if end > len(data):
                raise CheckpointError(f"checkpoint truncated in tensor {parts[0]!r}")
            arr = np.frombuffer(data[pos:end], dtype="<f4").astype(np.float64).reshape(shape)
            out[parts[0]] = Tensor(arr)
            pos = end
        if pos != len(data):
            raise CheckpointError(f"{len(data) - pos} trailing bytes after last tensor")
        return out

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ParamSet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def check_shapes(self, reference: "ParamSet") -> None:
        """Raise CheckpointError unless names and shapes agree with ``reference``."""
        mine, theirs = set(self), set(reference)
        if mine != theirs:
            missing = sorted(theirs - mine)
            extra = sorted(mine - theirs)
            raise CheckpointError(f"parameter names differ: missing {missing[:5]}, unexpected {extra[:5]}")
        for k in self:
            if self[k].shape != reference[k].shape:
                raise CheckpointError(f"shape mismatch for {k}: checkpoint {self[k].shape}, config {reference[k].shape}")
