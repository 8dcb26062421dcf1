"""Flow encodings used as extra network input channels.

* ``RGBOF`` - HSV colour wheel: hue from direction, saturation from
  normalised magnitude, value 1.  No motion renders white.
* ``XY``    - the raw ``u`` and ``v`` planes in pixels.
* ``PC``    - polar planes: magnitude in pixels and angle in ``[0, 2*pi)``.

Angles follow image coordinates (y down), so ``atan2(v, u)`` grows
clockwise on screen: a vector pointing up, ``(0, -1)``, has angle ``3*pi/2``.
"""
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import flo
from .imaging import FlowField, read_png, write_png

TWO_PI = 2.0 * np.pi
MIN_NORMALIZER = 1e-6


class EncodingKind(enum.Enum):
    RGBOF = "RGBof"
    XY = "XY"
    PC = "PC"

    @property
    def channels(self):
        return 3 if self is EncodingKind.RGBOF else 2


@dataclass(frozen=True)
class NormalizationPolicy:
    """``max_px=None`` normalises by the per-image maximum magnitude."""

    max_px: Optional[float] = None

    def __post_init__(self):
        if self.max_px is not None and not self.max_px > 0:
            raise ValueError(f"fixed cap must be positive, got {self.max_px}")

    @classmethod
    def per_image_max(cls):
        return cls(None)

    @classmethod
    def fixed_cap(cls, max_px):
        return cls(float(max_px))

    def normalizer(self, magnitude):
        if self.max_px is not None:
            return self.max_px
        return max(float(np.max(magnitude)) if magnitude.size else 0.0, MIN_NORMALIZER)

    def describe(self):
        return "per-image-max" if self.max_px is None else f"fixed-cap:{self.max_px:g}"


@dataclass(frozen=True)
class FlowEncoding:
    kind: EncodingKind
    planes: np.ndarray  # (H, W, channels)
    norm: Optional[NormalizationPolicy] = field(default=None)

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim != 3 or planes.shape[2] != self.kind.channels:
            raise ValueError(f"{self.kind.value} needs {self.kind.channels} planes, got shape {planes.shape}")
        object.__setattr__(self, "planes", planes)

    @property
    def shape(self):
        return self.planes.shape[:2]


def flow_to_xy(f: FlowField) -> FlowEncoding:
    return FlowEncoding(EncodingKind.XY, f.to_array())


def xy_to_flow(e: FlowEncoding) -> FlowField:
    return FlowField(e.planes[..., 0], e.planes[..., 1])


def _angle(u, v):
    ang = np.mod(np.arctan2(v, u), TWO_PI)
    # mod of a tiny negative angle rounds up to exactly 2*pi
    ang[ang >= TWO_PI] = 0.0
    ang[(u == 0) & (v == 0)] = 0.0
    return ang


def flow_to_polar(f: FlowField) -> FlowEncoding:
    mag = np.hypot(f.u, f.v)
    return FlowEncoding(EncodingKind.PC, np.stack([mag, _angle(f.u, f.v)], axis=-1))


def polar_to_flow(e: FlowEncoding) -> FlowField:
    mag, ang = e.planes[..., 0], e.planes[..., 1]
    return FlowField(mag * np.cos(ang), mag * np.sin(ang))


def hsv_to_rgb(h, s, v):
    """Vectorised HSV to RGB for arrays with ``h`` in [0, 1)."""
    h6 = np.mod(h, 1.0) * 6.0
    sector = np.floor(h6).astype(int) % 6
    frac = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * frac)
    t = v * (1 - s * (1 - frac))
    r = np.choose(sector, [v, q, p, p, t, v])
    g = np.choose(sector, [t, v, v, q, p, p])
    b = np.choose(sector, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def flow_to_colorwheel(f: FlowField, norm: NormalizationPolicy = NormalizationPolicy()) -> FlowEncoding:
    mag = np.hypot(f.u, f.v)
    sat = np.minimum(mag / norm.normalizer(mag), 1.0)
    hue = _angle(f.u, f.v) / TWO_PI
    rgb = hsv_to_rgb(hue, sat, np.ones_like(sat))
    return FlowEncoding(EncodingKind.RGBOF, np.clip(rgb, 0.0, 1.0), norm)


def encode(f: FlowField, kind, norm: NormalizationPolicy = NormalizationPolicy()) -> FlowEncoding:
    kind = EncodingKind(kind)
    if kind is EncodingKind.XY:
        return flow_to_xy(f)
    if kind is EncodingKind.PC:
        return flow_to_polar(f)
    return flow_to_colorwheel(f, norm)


SUFFIXES = {EncodingKind.RGBOF: "_rgbof.png", EncodingKind.XY: "_xy.flo", EncodingKind.PC: "_pc.flo"}


def encoding_path(stem, kind) -> Path:
    """``<stem>_rgbof.png``, ``<stem>_xy.flo`` or ``<stem>_pc.flo``."""
    kind = EncodingKind(kind)
    stem = Path(stem)
    return stem.with_name(stem.name + SUFFIXES[kind])


def save_encoding(stem, e: FlowEncoding) -> Path:
    path = encoding_path(stem, e.kind)
    if e.kind is EncodingKind.RGBOF:
        write_png(path, e.planes)
    else:
        flo.save_planes(path, e.planes)
    return path


def load_encoding(stem, kind) -> FlowEncoding:
    kind = EncodingKind(kind)
    path = encoding_path(stem, kind)
    if kind is EncodingKind.RGBOF:
        return FlowEncoding(kind, read_png(path))
    return FlowEncoding(kind, flo.load_planes(path).astype(np.float64))
