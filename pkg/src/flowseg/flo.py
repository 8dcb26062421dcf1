"""Middlebury ``.flo`` container.

Layout: the float32 magic ``202021.25`` (bytes ``PIEH``), width and height as
little-endian int32, then ``height * width`` interleaved ``(u, v)`` pairs as
little-endian float32, row-major.
"""
import struct
from pathlib import Path

import numpy as np

from .imaging import FlowField

MAGIC = b"PIEH"
MAGIC_FLOAT = 202021.25
_HEADER = struct.Struct("<4sii")


def encode_planes(planes) -> bytes:
    """Serialize any ``(H, W, 2)`` plane pair into the ``.flo`` container."""
    planes = np.asarray(planes)
    if planes.ndim != 3 or planes.shape[2] != 2:
        raise ValueError(f"expected (H, W, 2) planes, got {planes.shape}")
    if not np.all(np.isfinite(planes)):
        raise ValueError("cannot serialize non-finite values")
    h, w = planes.shape[:2]
    return _HEADER.pack(MAGIC, w, h) + planes.astype("<f4").tobytes(order="C")


def decode_planes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError(f"truncated .flo header ({len(data)} bytes)")
    magic, w, h = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad .flo magic {magic!r}")
    if w < 1 or h < 1:
        raise ValueError(f"invalid .flo dimensions {w}x{h}")
    expected = _HEADER.size + 8 * w * h
    if len(data) != expected:
        raise ValueError(f".flo payload is {len(data)} bytes, expected {expected} for {w}x{h}")
    planes = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w, 2)
    if not np.all(np.isfinite(planes)):
        raise ValueError(".flo payload contains non-finite values")
    return planes.astype(np.float32)


def write_flo(flow: FlowField) -> bytes:
    return encode_planes(flow.to_array())


def read_flo(data: bytes) -> FlowField:
    return FlowField.from_array(decode_planes(data))


def save_flo(path, flow: FlowField):
    Path(path).write_bytes(write_flo(flow))


def load_flo(path) -> FlowField:
    return read_flo(Path(path).read_bytes())


def save_planes(path, planes):
    Path(path).write_bytes(encode_planes(planes))


def load_planes(path) -> np.ndarray:
    return decode_planes(Path(path).read_bytes())
