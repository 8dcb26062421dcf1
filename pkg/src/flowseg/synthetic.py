"""Analytic smooth textures and frame pairs with a known motion field.

Frames are evaluated from a closed-form texture at displaced coordinates, so
the ground-truth flow is exact and no interpolation error leaks into it.
"""
from dataclasses import dataclass

import numpy as np

from .imaging import FlowField


@dataclass(frozen=True)
class BlobTexture:
    """Sum of isotropic Gaussian blobs, rescaled to ``[0, 1]`` over its domain."""

    cx: np.ndarray
    cy: np.ndarray
    sigma: np.ndarray
    amp: np.ndarray
    lo: float
    hi: float

    @classmethod
    def random(cls, rng, width, height, n_blobs=40, sigma_range=(4.0, 12.0), margin=20.0):
        cx = rng.uniform(-margin, width + margin, n_blobs)
        cy = rng.uniform(-margin, height + margin, n_blobs)
        sigma = rng.uniform(*sigma_range, n_blobs)
        amp = rng.uniform(-1.0, 1.0, n_blobs)
        yy, xx = np.mgrid[-margin:height + margin:4.0, -margin:width + margin:4.0]
        raw = cls._raw(cx, cy, sigma, amp, xx, yy)
        pad = 0.25 * (raw.max() - raw.min()) + 1e-9
        return cls(cx, cy, sigma, amp, float(raw.min() - pad), float(raw.max() + pad))

    @staticmethod
    def _raw(cx, cy, sigma, amp, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for i in range(len(cx)):
            out += amp[i] * np.exp(-((x - cx[i]) ** 2 + (y - cy[i]) ** 2) / (2.0 * sigma[i] ** 2))
        return out

    def __call__(self, x, y):
        raw = self._raw(self.cx, self.cy, self.sigma, self.amp, x, y)
        return np.clip((raw - self.lo) / (self.hi - self.lo), 0.0, 1.0)


def _grid(height, width):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return xx, yy


def translated_pair(texture, height, width, du, dv):
    """Frames ``a`` and ``b`` where every point of ``a`` moves by ``(du, dv)``."""
    xx, yy = _grid(height, width)
    return texture(xx, yy), texture(xx - du, yy - dv), FlowField.constant(height, width, du, dv)


def rotated_pair(texture, height, width, angle):
    """Frames where ``a`` rotates by ``angle`` (radians, atan2 sense) about the centre."""
    xx, yy = _grid(height, width)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    c, s = np.cos(angle), np.sin(angle)
    dx, dy = xx - cx, yy - cy
    # b(x) = a(R^-1 (x - c) + c)
    b = texture(cx + c * dx + s * dy, cy - s * dx + c * dy)
    flow = FlowField(cx + c * dx - s * dy - xx, cy + s * dx + c * dy - yy)
    return texture(xx, yy), b, flow


def affine_pair(texture, height, width, matrix, shift=(0.0, 0.0)):
    """Frames related by ``x -> c + M (x - c) + shift`` about the centre."""
    m = np.asarray(matrix, dtype=np.float64)
    inv = np.linalg.inv(m)
    xx, yy = _grid(height, width)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    dx, dy = xx - cx - shift[0], yy - cy - shift[1]
    b = texture(cx + inv[0, 0] * dx + inv[0, 1] * dy, cy + inv[1, 0] * dx + inv[1, 1] * dy)
    px, py = xx - cx, yy - cy
    flow = FlowField(m[0, 0] * px + m[0, 1] * py + shift[0] - px, m[1, 0] * px + m[1, 1] * py + shift[1] - py)
    return texture(xx, yy), b, flow
