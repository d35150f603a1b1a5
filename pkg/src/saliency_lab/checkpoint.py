"""Binary checkpoint files (``.sglb``).

Layout, all integers unsigned 32-bit little-endian::

    b"SGLB" | version | len | config JSON (UTF-8)
    then until EOF, per parameter:
    len | name (UTF-8) | rank | dim * rank | float64 LE data (row-major)
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SGLB"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """Parameters under ``prefix.`` with the prefix stripped."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(_U32.pack(FORMAT_VERSION))
        blob = json.dumps(self.config, sort_keys=True).encode("utf-8")
        buf.write(_U32.pack(len(blob)))
        buf.write(blob)
        for name, arr in self.params.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            buf.write(_U32.pack(len(raw)))
            buf.write(raw)
            buf.write(_U32.pack(arr.ndim))
            for d in arr.shape:
                buf.write(_U32.pack(d))
            buf.write(arr.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        view = memoryview(data)
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError("truncated checkpoint")
            chunk = view[pos:pos + n]
            pos += n
            return chunk

        def u32():
            return _U32.unpack(take(4))[0]

        if bytes(take(4)) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        version = u32()
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        try:
            config = json.loads(bytes(take(u32())).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"bad config blob: {exc}") from exc
        params = {}
        while pos < len(view):
            name = bytes(take(u32())).decode("utf-8")
            shape = tuple(u32() for _ in range(u32()))
            count = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
            params[name] = arr
        return cls(config, params)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def checkpoint_name(phase: str, epoch: int) -> str:
    return f"ckpt_{phase}_{epoch:04}.sglb"
