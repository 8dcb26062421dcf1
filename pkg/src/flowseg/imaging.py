"""Raster primitives shared by the whole toolkit.

Images are ``(H, W)`` or ``(H, W, C)`` float arrays with values in ``[0, 1]``.
Label masks are ``(H, W)`` integer arrays.  Flow fields carry two planes of
pixel displacements, ``u`` to the right and ``v`` downward.

All resizes use the half-pixel-centre convention: output pixel ``i`` samples
the input at ``(i + 0.5) * in_size / out_size - 0.5``, clamped to the border.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field in pixel units (x right, y down)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be 2-D with equal shapes, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow field contains non-finite values")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def shape(self):
        return self.u.shape

    @classmethod
    def zeros(cls, height, width):
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height, width, u, v):
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)))

    @classmethod
    def from_array(cls, arr):
        """Build from an ``(H, W, 2)`` array."""
        arr = np.asarray(arr)
        return cls(arr[..., 0], arr[..., 1])

    def to_array(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def __neg__(self):
        return FlowField(-self.u, -self.v)

    def __add__(self, other):
        return FlowField(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return FlowField(self.u - other.u, self.v - other.v)


def endpoint_error(a: FlowField, b: FlowField, border: int = 0) -> float:
    """Mean Euclidean distance between two fields, ignoring ``border`` pixels."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    err = np.hypot(a.u - b.u, a.v - b.v)
    if border:
        err = err[border:-border, border:-border]
    return float(err.mean())


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3) or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"expected a non-empty (H, W[, C]) image, got shape {img.shape}")
    if img.ndim == 3 and not 1 <= img.shape[2] <= 3:
        raise ValueError(f"images carry 1 to 3 channels, got {img.shape[2]}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must be finite and lie in [0, 1]")
    return img


def check_mask(mask, num_classes=None) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError(f"expected a non-empty (H, W) mask, got shape {mask.shape}")
    if not np.issubdtype(mask.dtype, np.integer):
        raise TypeError(f"mask labels must be integers, got {mask.dtype}")
    if mask.min() < 0:
        raise ValueError("mask labels must be non-negative")
    if num_classes is not None and mask.max() >= num_classes:
        raise ValueError(f"label {mask.max()} outside declared class count {num_classes}")
    return mask


def to_luminance(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[..., 0]
    return img[..., :3] @ np.array(LUMA_WEIGHTS)


def _sample_coords(n_in, n_out):
    return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5


def _axis_weights(coords, n):
    coords = np.clip(coords, 0.0, n - 1)
    i0 = np.floor(coords).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, coords - i0


def resize_bilinear(img, width: int, height: int) -> np.ndarray:
    """Bilinear resize of an image or any float plane stack ``(H, W[, C])``."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 2 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"cannot resize a zero-sized raster {img.shape}")
    if width < 1 or height < 1:
        raise ValueError(f"target size must be positive, got {width}x{height}")
    h, w = img.shape[:2]
    if (w, h) == (width, height):
        return img.copy()
    y0, y1, fy = _axis_weights(_sample_coords(h, height), h)
    x0, x1, fx = _axis_weights(_sample_coords(w, width), w)
    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    # Convex combinations can drift a few ulps past the input range.
    return np.clip(out, img.min(), img.max())


def resize_nearest(mask, width: int, height: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim < 2 or mask.shape[0] == 0 or mask.shape[1] == 0:
        raise ValueError(f"cannot resize a zero-sized raster {mask.shape}")
    if width < 1 or height < 1:
        raise ValueError(f"target size must be positive, got {width}x{height}")
    h, w = mask.shape[:2]
    ys = np.clip(np.floor((np.arange(height) + 0.5) * h / height), 0, h - 1).astype(np.intp)
    xs = np.clip(np.floor((np.arange(width) + 0.5) * w / width), 0, w - 1).astype(np.intp)
    return mask[ys][:, xs].copy()


def crop(img, x: int, y: int, width: int, height: int) -> np.ndarray:
    """Copy the ``width`` x ``height`` rectangle whose top-left corner is ``(x, y)``."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if x < 0 or y < 0 or width < 1 or height < 1 or x + width > w or y + height > h:
        raise ValueError(f"rect ({x}, {y}, {width}, {height}) outside {w}x{h} raster")
    return img[y:y + height, x:x + width].copy()


def crop_flow(flow: FlowField, x, y, width, height) -> FlowField:
    return FlowField(crop(flow.u, x, y, width, height), crop(flow.v, x, y, width, height))


def sample_bilinear(plane, xs, ys, fill=None):
    """Sample a 2-D plane (or ``(H, W, C)`` stack) at float coordinates.

    With ``fill=None`` coordinates are clamped to the border; otherwise points
    outside ``[0, W-1] x [0, H-1]`` receive ``fill``.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    outside = None
    if fill is not None:
        eps = 1e-9
        outside = (xs < -eps) | (xs > w - 1 + eps) | (ys < -eps) | (ys > h - 1 + eps)
    x0, x1, fx = _axis_weights(xs, w)
    y0, y1, fy = _axis_weights(ys, h)
    if plane.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    if outside is not None:
        out[outside] = fill
    return out


def sample_nearest(labels, xs, ys, fill=0):
    labels = np.asarray(labels)
    h, w = labels.shape[:2]
    xi = np.floor(np.asarray(xs) + 0.5).astype(np.intp)
    yi = np.floor(np.asarray(ys) + 0.5).astype(np.intp)
    outside = (xi < 0) | (xi >= w) | (yi < 0) | (yi >= h)
    out = labels[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
    out[outside] = fill
    return out


def warp_image(img, flow: FlowField):
    """Backward warp: ``out(p) = img(p + flow(p))`` with border clamping."""
    h, w = flow.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return sample_bilinear(img, xx + flow.u, yy + flow.v)


def read_png(path) -> np.ndarray:
    """Load an 8-bit PNG as floats in ``[0, 1]`` (RGB or gray)."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im)
    return arr.astype(np.float64) / 255.0


def write_png(path, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data).save(Path(path), optimize=False)


def read_mask_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode == "P":
            arr = np.asarray(im)
        else:
            arr = np.asarray(im.convert("L")) if im.mode != "L" else np.asarray(im)
    return arr.astype(np.int64)


def write_mask_png(path, mask):
    mask = check_mask(mask)
    if mask.max() > 255:
        raise ValueError("mask labels above 255 cannot be stored as 8-bit PNG")
    PILImage.fromarray(mask.astype(np.uint8)).save(Path(path), optimize=False)
