"""Self-describing binary checkpoint container.

Layout (all integers little-endian):

    magic   7 bytes  b"FVCKPT1"
    u16     model name length, then UTF-8 model name
    u32     metadata length, then UTF-8 "key=value" lines
    u32     number of blocks
    per block:
        u16     block name length, then UTF-8 block name
        u8      ndim
        u32*ndim dimensions
        float64le data, row-major

Blocks carry every live array of the model: weights, biases, batch-norm
affine parameters and running statistics, so a round trip reproduces
fuse() output bit-exactly. No timestamps: identical training runs must
produce identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import FusionModel, build_model

MAGIC = b"FVCKPT1"


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def _pack_str(s: str, fmt: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(fmt, len(raw)) + raw


def serialize(model: FusionModel, metadata: dict[str, str]) -> bytes:
    """Encode a model plus metadata text into the container format."""
    for k, v in metadata.items():
        if "=" in k or "\n" in k:
            raise ValueError(f"metadata key {k!r} may not contain '=' or newlines")
        if "\n" in v:
            raise ValueError(f"metadata value for {k!r} may not contain newlines")
    meta_text = "\n".join(f"{k}={v}" for k, v in sorted(metadata.items()))
    blocks = model.state_blocks()

    out = [MAGIC, _pack_str(model.name, "<H")]
    meta_raw = meta_text.encode("utf-8")
    out.append(struct.pack("<I", len(meta_raw)))
    out.append(meta_raw)
    out.append(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        out.append(_pack_str(name, "<H"))
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals

    def string(self, fmt: str) -> str:
        n = self.unpack(fmt)
        return self.take(n).decode("utf-8")


def deserialize(buf: bytes) -> tuple[FusionModel, dict[str, str]]:
    """Decode a container; returns the reconstructed model and its metadata."""
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    name = r.string("<H")
    meta_text = r.take(r.unpack("<I")).decode("utf-8")
    metadata = {}
    for line in meta_text.splitlines():
        key, _, value = line.partition("=")
        metadata[key] = value
    n_blocks = r.unpack("<I")
    blocks: dict[str, np.ndarray] = {}
    for _ in range(n_blocks):
        bname = r.string("<H")
        ndim = r.unpack("<B")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64)
        blocks[bname] = data.reshape(dims)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after blocks")

    try:
        model = build_model(name, seed=0)
    except ValueError as e:
        raise CheckpointError(str(e)) from e
    model.load_state_blocks(blocks)
    return model, metadata


def save_checkpoint(path: str | Path, model: FusionModel, metadata: dict[str, str]):
    Path(path).write_bytes(serialize(model, metadata))


def load_checkpoint(path: str | Path) -> tuple[FusionModel, dict[str, str]]:
    return deserialize(Path(path).read_bytes())
