"""Geometric augmentation with one consistent action on images, masks and flow.

A transform maps a point ``x`` of the source raster to

    x' = c + L (x - c) (+ elastic displacement),   L = scale * R(rotation) * F

about the raster centre ``c``; ``F`` negates x under ``hflip`` and y under
``vflip``.  ``R`` rotates counter-clockwise as displayed (y axis down), so a
+90 degree rotation sends the vector ``(1, 0)`` to ``(0, -1)``.

Images are inverse-warped bilinearly, masks by nearest neighbour, and flow
planes are inverse-warped then multiplied by ``L``: if ``a(p) = b(p + f(p))``
then ``T(a)`` and ``T(b)`` are related by the field ``L f(T^-1 x')``.
Elastic displacements resample flow planes without reorienting the vectors.

Photometric operations (noise, blur, brightness, contrast, gamma,
low-resolution simulation) are deliberately not representable here.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .encodings import EncodingKind, FlowEncoding, NormalizationPolicy, encode
from .imaging import FlowField, sample_bilinear, sample_nearest


@dataclass(frozen=True)
class ElasticSpec:
    alpha: float
    sigma: float
    seed: int

    def displacement(self, height, width):
        rng = np.random.default_rng(self.seed)
        dx = gaussian_filter(rng.uniform(-1, 1, (height, width)), self.sigma, mode="constant")
        dy = gaussian_filter(rng.uniform(-1, 1, (height, width)), self.sigma, mode="constant")
        return dx * self.alpha, dy * self.alpha


@dataclass(frozen=True)
class GeomTransform:
    rotation: float = 0.0
    scale: float = 1.0
    hflip: bool = False
    vflip: bool = False
    elastic: Optional[ElasticSpec] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not -np.pi <= self.rotation <= np.pi:
            raise ValueError(f"rotation must lie in [-pi, pi], got {self.rotation}")

    @property
    def is_identity(self):
        return (self.rotation == 0.0 and self.scale == 1.0 and not self.hflip
                and not self.vflip and self.elastic is None)

    def linear_part(self) -> np.ndarray:
        """The 2x2 matrix ``L`` acting on (x, y-down) vectors."""
        c, s = _exact_cos_sin(self.rotation)
        rot = np.array([[c, s], [-s, c]])
        flip = np.diag([-1.0 if self.hflip else 1.0, -1.0 if self.vflip else 1.0])
        return self.scale * rot @ flip

    def source_coords(self, height, width):
        """Source-raster sample positions for every output pixel."""
        cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        inv = _exact_inverse(self.linear_part(), self)
        dx, dy = xx - cx, yy - cy
        sx = cx + inv[0, 0] * dx + inv[0, 1] * dy
        sy = cy + inv[1, 0] * dx + inv[1, 1] * dy
        if self.elastic is not None:
            ex, ey = self.elastic.displacement(height, width)
            sx = sx + ex
            sy = sy + ey
        return sx, sy


def _exact_cos_sin(theta):
    quarter = theta / (np.pi / 2)
    k = round(quarter)
    if abs(quarter - k) < 1e-12:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4]
    return np.cos(theta), np.sin(theta)


def _exact_inverse(lin, t):
    # Quarter-turn rotations with flips are orthogonal: use the transpose so the
    # inverse stays exact and sampling hits integer positions.
    if t.scale == 1.0:
        c, s = _exact_cos_sin(t.rotation)
        if c in (0.0, 1.0, -1.0) and s in (0.0, 1.0, -1.0):
            return lin.T.copy()
    return np.linalg.inv(lin)


def apply_to_image(t: GeomTransform, img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if t.is_identity:
        return img.copy()
    sx, sy = t.source_coords(*img.shape[:2])
    return sample_bilinear(img, sx, sy, fill=0.0)


def apply_to_mask(t: GeomTransform, mask, background: int = 0) -> np.ndarray:
    mask = np.asarray(mask)
    if t.is_identity:
        return mask.copy()
    sx, sy = t.source_coords(*mask.shape[:2])
    return sample_nearest(mask, sx, sy, fill=background)


def apply_to_flow(t: GeomTransform, f: FlowField) -> FlowField:
    if t.is_identity:
        return f
    sx, sy = t.source_coords(f.height, f.width)
    u = sample_bilinear(f.u, sx, sy, fill=0.0)
    v = sample_bilinear(f.v, sx, sy, fill=0.0)
    lin = t.linear_part()
    return FlowField(lin[0, 0] * u + lin[0, 1] * v, lin[1, 0] * u + lin[1, 1] * v)


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling policy; defaults follow the usual nnU-Net geometric settings."""

    rotation_range: Tuple[float, float] = (-np.pi / 6, np.pi / 6)
    p_rotation: float = 0.2
    scale_range: Tuple[float, float] = (0.7, 1.4)
    p_scale: float = 0.2
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_elastic: float = 0.2
    elastic_alpha: float = 8.0
    elastic_sigma: float = 6.0
    elastic_on_flow: bool = True

    def __post_init__(self):
        for name in ("rotation_range", "scale_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        lo, hi = self.rotation_range
        if lo < -np.pi or hi > np.pi:
            raise ValueError("rotation_range must lie within [-pi, pi]")
        if self.scale_range[0] <= 0:
            raise ValueError("scale_range must be positive")
        for name in ("p_rotation", "p_scale", "p_hflip", "p_vflip", "p_elastic"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")

    @classmethod
    def disabled(cls):
        return cls(p_rotation=0.0, p_scale=0.0, p_hflip=0.0, p_vflip=0.0, p_elastic=0.0)


def sample_transform(seed: int, cfg: AugmentConfig = AugmentConfig()) -> GeomTransform:
    rng = np.random.default_rng(seed)
    # Draw every component unconditionally so one probability never shifts
    # the random stream of another.
    draws = rng.uniform(size=5)
    rotation = rng.uniform(*cfg.rotation_range)
    scale = rng.uniform(*cfg.scale_range)
    elastic_seed = int(rng.integers(0, 2 ** 31 - 1))
    return GeomTransform(
        rotation=float(rotation) if draws[0] < cfg.p_rotation else 0.0,
        scale=float(scale) if draws[1] < cfg.p_scale else 1.0,
        hflip=bool(draws[2] < cfg.p_hflip),
        vflip=bool(draws[3] < cfg.p_vflip),
        elastic=(ElasticSpec(cfg.elastic_alpha, cfg.elastic_sigma, elastic_seed)
                 if draws[4] < cfg.p_elastic else None),
    )


@dataclass
class AugmentedSample:
    image: np.ndarray
    mask: np.ndarray
    transform: GeomTransform
    flow_planes: Optional[FlowEncoding] = None
    # True when flow vectors were resampled through an elastic warp without
    # Jacobian reorientation.
    flow_approximate: bool = field(default=False)


def augment_sample(t: GeomTransform, image, mask, flow: Optional[FlowField] = None, kind=None,
                   norm: NormalizationPolicy = NormalizationPolicy(),
                   elastic_on_flow: bool = True) -> AugmentedSample:
    """Transform a training sample; flow is transformed before it is encoded."""
    out_img = apply_to_image(t, image)
    out_mask = apply_to_mask(t, mask)
    planes = None
    approximate = False
    if flow is not None:
        ft = t
        if t.elastic is not None and not elastic_on_flow:
            ft = GeomTransform(t.rotation, t.scale, t.hflip, t.vflip, None)
        approximate = ft.elastic is not None
        planes = encode(apply_to_flow(ft, flow), EncodingKind(kind or EncodingKind.XY), norm)
    return AugmentedSample(out_img, out_mask, t, planes, approximate)
