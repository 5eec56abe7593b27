"""Binary checkpoint container for named parameter tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"TTCP"
    version u32      currently 1
    meta    u32 length + that many bytes of UTF-8 JSON
    count   u32      number of tensor records
    record  u16 name length, name UTF-8, u8 ndim, ndim * u32 dims,
            prod(dims) float64 values, row-major

Loading verifies the magic and version up front and checks that every stored
tensor matches the shape of the destination parameter, so a checkpoint from a
differently configured model is rejected with a message naming the mismatch.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"TTCP"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION),
              struct.pack("<I", len(meta_blob)), meta_blob,
              struct.pack("<I", len(params))]
    for name, value in params.items():
        arr = np.asarray(value, dtype=np.float64)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    blob = b"".join(chunks)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint "
                                  f"(wanted {n} bytes at offset {self.pos})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (meta, {name: float64 array})."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    tensors = {}
    for _ in range(r.u32()):
        name_len = struct.unpack("<H", r.take(2))[0]
        name = r.take(name_len).decode("utf-8")
        ndim = struct.unpack("<B", r.take(1))[0]
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        tensors[name] = data.astype(np.float64)
    return meta, tensors


def load_into(path: str, params: dict[str, "np.ndarray"]) -> dict:
    """Copy stored tensors into the given parameter dict (values must expose
    .data like DenseTensor). Shape or name mismatches raise CheckpointError."""
    meta, tensors = read_checkpoint(path)
    missing = sorted(set(params) - set(tensors))
    if missing:
        raise CheckpointError(f"{path}: checkpoint lacks parameters {missing[:5]}")
    extra = sorted(set(tensors) - set(params))
    if extra:
        raise CheckpointError(f"{path}: checkpoint has unknown parameters {extra[:5]}")
    for name, p in params.items():
        if tuple(tensors[name].shape) != tuple(p.data.shape):
            raise CheckpointError(f"{path}: shape mismatch for {name}: checkpoint "
                                  f"{tensors[name].shape} vs model {p.data.shape}")
    for name, p in params.items():
        p.data = tensors[name].copy()
    return meta
