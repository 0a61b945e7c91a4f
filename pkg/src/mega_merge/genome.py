"""Flat parameter vectors ("genomes") and the binary checkpoint format.

Layout of a checkpoint, all integers little-endian::

    b"MEGA" | version:u32 (=1) | n_layers:u32 | (rows:u32, cols:u32) * n_layers
    | total_len * f32 | crc32:u32 over every preceding byte

Values are ordered layer by layer: weight matrix row-major, then the bias.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    IncompatibleGenomesError,
    LengthMismatchError,
    NonFiniteValueError,
    ShapeMismatchError,
    VersionMismatchError,
)

MAGIC = b"MEGA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_SHAPE = struct.Struct("<II")
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class ShapeManifest:
    """Ordered ``(rows, cols)`` of every dense layer; each implies a ``cols`` bias."""

    layer_shapes: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        shapes = tuple((int(r), int(c)) for r, c in self.layer_shapes)
        if any(r < 1 or c < 1 for r, c in shapes):
            raise ShapeMismatchError(f"layer shapes must be positive: {shapes}")
        object.__setattr__(self, "layer_shapes", shapes)

    @property
    def total_len(self) -> int:
        return sum(r * c + c for r, c in self.layer_shapes)

    def __str__(self):
        return " ".join(f"{r}x{c}+{c}" for r, c in self.layer_shapes)


@dataclass(frozen=True, eq=False)
class Genome:
    """Read-only float64 parameter vector tagged with its manifest."""

    values: np.ndarray
    manifest: ShapeManifest

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if values.shape[0] != self.manifest.total_len:
            raise LengthMismatchError(
                f"genome has {values.shape[0]} values, manifest needs {self.manifest.total_len}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("genome contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return self.manifest == other.manifest and np.array_equal(self.values, other.values)

    __hash__ = None

    def with_values(self, values) -> "Genome":
        return Genome(values, self.manifest)


def flatten(layered) -> Genome:
    shapes = []
    chunks = []
    for i, (w, b) in enumerate(layered):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ShapeMismatchError(
                f"layer {i}: weight {w.shape} does not match bias {b.shape}"
            )
        shapes.append(w.shape)
        chunks.append(w.reshape(-1))
        chunks.append(b)
    if not shapes:
        raise ShapeMismatchError("no layers to flatten")
    return Genome(np.concatenate(chunks), ShapeManifest(tuple(shapes)))


def unflatten(genome: Genome):
    values = genome.values
    if values.shape[0] != genome.manifest.total_len:
        raise LengthMismatchError(
            f"{values.shape[0]} values for a manifest of {genome.manifest.total_len}"
        )
    layered = []
    pos = 0
    for r, c in genome.manifest.layer_shapes:
        w = values[pos : pos + r * c].reshape(r, c).copy()
        pos += r * c
        b = values[pos : pos + c].copy()
        pos += c
        layered.append((w, b))
    return layered


def compatible(a: Genome, b: Genome) -> bool:
    return a.manifest == b.manifest


def require_compatible(a: Genome, b: Genome, what="genomes") -> None:
    if not compatible(a, b):
        raise IncompatibleGenomesError(
            f"incompatible {what}: [{a.manifest}] vs [{b.manifest}]"
        )


def encode_checkpoint(genome: Genome) -> bytes:
    shapes = genome.manifest.layer_shapes
    with np.errstate(over="ignore"):
        f32 = genome.values.astype("<f4")
    if not np.all(np.isfinite(f32)):
        raise NonFiniteValueError("value overflows float32")
    body = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, len(shapes)))
    for r, c in shapes:
        body += _SHAPE.pack(r, c)
    body += f32.tobytes()
    body += _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)
    return bytes(body)


def decode_checkpoint(data: bytes) -> Genome:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("bad magic: not a MEGA checkpoint")
    if len(data) < _HEADER.size:
        raise LengthMismatchError("length mismatch: header truncated")
    _, version, n_layers = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"version mismatch: file has format {version}, expected {FORMAT_VERSION}"
        )
    pos = _HEADER.size
    if len(data) < pos + n_layers * _SHAPE.size:
        raise LengthMismatchError("length mismatch: layer table truncated")
    shapes = []
    for _ in range(n_layers):
        shapes.append(_SHAPE.unpack_from(data, pos))
        pos += _SHAPE.size
    manifest = ShapeManifest(tuple(shapes))
    expected = pos + 4 * manifest.total_len + _CRC.size
    if len(data) != expected:
        raise LengthMismatchError(
            f"length mismatch: {len(data)} bytes, expected {expected} for [{manifest}]"
        )
    (stored_crc,) = _CRC.unpack_from(data, expected - _CRC.size)
    if zlib.crc32(data[: expected - _CRC.size]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("checksum mismatch: file is corrupt")
    values = np.frombuffer(data, dtype="<f4", count=manifest.total_len, offset=pos)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("checkpoint holds non-finite values")
    return Genome(values.astype(np.float64), manifest)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a sibling temp file so a failure never leaves a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(genome: Genome, path) -> None:
    atomic_write_bytes(path, encode_checkpoint(genome))


def load_checkpoint(path) -> Genome:
    return decode_checkpoint(Path(path).read_bytes())
