"""Flat binary model container (.cdm).

Layout, all integers little-endian:

    magic            4 bytes  b"CDM1"
    format_version   u32      currently 1
    arch block       u32 length + canonical arch text (UTF-8)
    labels block     u32 count, then per label u32 length + UTF-8 bytes
    tensor directory u32 count, then per tensor:
                         u32 name length + UTF-8 name
                         u32 rank, rank * u32 extents
                         u64 byte offset (relative to payload start)
                         u64 byte length
    padding          0-3 zero bytes so the payload starts 4-byte aligned
    payload          raw float32 values, each tensor 4-byte aligned
    trailer          u32 CRC-32 of every preceding byte

Saving is deterministic (same model, same bytes) and atomic: the file
is written to a temp path and renamed into place, so readers never see
a partial container. Loaded models are immutable.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arch import ArchSpec
from .errors import CorruptionError, ModelValidationError, NotAModelError, VersionError
from .nn import Model, _param_shapes

MAGIC = b"CDM1"
FORMAT_VERSION = 1
FILE_EXTENSION = ".cdm"


def _param_order(arch: ArchSpec) -> list[str]:
    """Directory order: layer order, weight before bias."""
    names = []
    for idx, spec in enumerate(arch.layers):
        if spec.kind in ("conv2d", "dense"):
            names.append(f"{spec.kind}{idx}.weight")
            names.append(f"{spec.kind}{idx}.bias")
    return names


def save(model: Model, path) -> None:
    """Write the model as a container file; validates before any write."""
    expected = _param_shapes(model.arch)
    for name, shape in expected.items():
        if name not in model.weights or tuple(model.weights[name].shape) != shape:
            raise ModelValidationError(f"{name} missing or mismatched against architecture")

    arch_text = model.arch.to_text().encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(struct.pack("<I", len(arch_text)))
    parts.append(arch_text)
    parts.append(struct.pack("<I", len(model.arch.labels)))
    for label in model.arch.labels:
        raw = label.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)

    names = _param_order(model.arch)
    offset = 0
    directory = []
    payload = []
    for name in names:
        arr = np.ascontiguousarray(model.weights[name], dtype="<f4")
        raw = arr.tobytes()
        directory.append((name, arr.shape, offset, len(raw)))
        payload.append(raw)
        offset += len(raw)  # float32 tensors keep offsets 4-byte aligned

    parts.append(struct.pack("<I", len(directory)))
    for name, shape, off, length in directory:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
        parts.append(struct.pack("<QQ", off, length))

    header = b"".join(parts)
    pad = (-len(header)) % 4
    blob = header + b"\x00" * pad + b"".join(payload)
    blob += struct.pack("<I", zlib.crc32(blob))

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptionError("container truncated inside the header")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


@dataclass(frozen=True)
class ContainerInfo:
    """Parsed header for `describe`: everything except the weight values."""

    format_version: int
    arch_text: str
    labels: tuple[str, ...]
    tensors: tuple[tuple[str, tuple[int, ...], int, int], ...]  # name, shape, offset, length
    payload_bytes: int
    file_bytes: int


def _parse(blob: bytes):
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise NotAModelError("bad magic: not a model container")
    if len(blob) < 12:
        raise CorruptionError("container truncated inside the header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unknown container format version {version}")
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != crc_stored:
        raise CorruptionError("CRC mismatch: container corrupted or truncated")

    r = _Reader(blob[:-4])
    r.take(8)  # magic + version
    arch_text = r.take(r.u32()).decode("utf-8")
    labels = tuple(r.take(r.u32()).decode("utf-8") for _ in range(r.u32()))
    tensors = []
    prev_end = 0
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        off, length = r.u64(), r.u64()
        if length != 4 * int(np.prod(shape, dtype=np.int64)):  # empty shape -> 4
            raise CorruptionError(f"directory length for {name} disagrees with its shape")
        if off < prev_end:
            raise CorruptionError("tensor directory offsets overlap or decrease")
        prev_end = off + length
        tensors.append((name, shape, off, length))
    pad = (-r.pos) % 4
    r.take(pad)
    payload_start = r.pos
    payload_bytes = len(blob) - 4 - payload_start
    if prev_end > payload_bytes:
        raise CorruptionError("tensor directory points past the payload")
    return arch_text, labels, tuple(tensors), payload_start, payload_bytes


def load(path) -> Model:
    """Read, validate and reconstruct a model; never returns partial state."""
    blob = Path(path).read_bytes()
    arch_text, labels, tensors, payload_start, _ = _parse(blob)
    arch = ArchSpec.from_text(arch_text, labels)
    weights = {}
    for name, shape, off, length in tensors:
        start = payload_start + off
        weights[name] = np.frombuffer(
            blob, dtype="<f4", count=length // 4, offset=start
        ).reshape(shape).copy()
    try:
        return Model(arch, weights)
    except ModelValidationError as exc:
        raise CorruptionError(f"container weights disagree with its architecture: {exc}") from exc


def describe(path) -> ContainerInfo:
    blob = Path(path).read_bytes()
    arch_text, labels, tensors, _, payload_bytes = _parse(blob)
    (version,) = struct.unpack_from("<I", blob, 4)
    return ContainerInfo(version, arch_text, labels, tensors, payload_bytes, len(blob))


def file_digest(path) -> str:
    """SHA-256 of the container bytes; the model version identifier."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
