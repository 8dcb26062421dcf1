"""Two-tile flow inference for wide frames.

A landscape frame is covered by two squares of side ``min(w, h)``, one
flush left and one flush right.  Each square is resized to ``tile_size``,
flow is estimated per tile, and the tiles are placed side by side on a
``stitched`` canvas whose pixel pitch is ``side / tile_size`` source pixels
in both axes (854x480 frames give a 456x256 canvas).
"""
import enum
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .imaging import FlowField, crop, resize_bilinear, sample_bilinear

Rect = Tuple[int, int, int, int]


class Blend(enum.Enum):
    AVERAGE = "average"
    LINEAR_FEATHER = "feather"


def _round_half_up(num, den):
    """round(num / den) for non-negative integers, halves rounded up."""
    return (2 * num + den) // (2 * den)


@dataclass(frozen=True)
class TilingPlan:
    source: Tuple[int, int]
    side: int
    left: Rect
    right: Rect
    tile_size: int
    stitched: Tuple[int, int]
    right_offset: int
    blend: Blend = Blend.LINEAR_FEATHER

    @property
    def overlap(self) -> int:
        return self.tile_size - self.right_offset

    @property
    def pitch(self) -> float:
        """Source pixels per stitched pixel."""
        return self.side / self.tile_size


def plan_tiles(width: int, height: int, tile_size: int = 256, blend=Blend.LINEAR_FEATHER) -> TilingPlan:
    """Plan the left/right square crops for a ``width`` x ``height`` frame.

    The stitched width is ``ceil(width * tile_size / side)`` so the canvas
    covers the whole frame; the right tile offset is rounded half-up.  A
    column left uncovered by that rounding is filled from the right tile's
    last column.
    """
    if width < 1 or height < 1 or tile_size < 1:
        raise ValueError(f"invalid geometry {width}x{height}, tile {tile_size}")
    if width < height:
        raise ValueError(f"portrait frames ({width}x{height}) are not supported")
    side = height
    right_x = width - side
    stitched_w = -(-width * tile_size // side)
    offset = _round_half_up(right_x * tile_size, side)
    return TilingPlan(
        source=(width, height),
        side=side,
        left=(0, 0, side, side),
        right=(right_x, 0, side, side),
        tile_size=tile_size,
        stitched=(stitched_w, tile_size),
        right_offset=offset,
        blend=Blend(blend),
    )


def tile_images(img, plan: TilingPlan):
    """Crop and resize the two squares of ``img`` to ``tile_size``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (w, h) != plan.source:
        raise ValueError(f"frame {w}x{h} does not match plan source {plan.source}")
    t = plan.tile_size
    return resize_bilinear(crop(img, *plan.left), t, t), resize_bilinear(crop(img, *plan.right), t, t)


def _stitch_plane(left, right, plan):
    t = plan.tile_size
    sw, sh = plan.stitched
    out = np.zeros((sh, sw))
    o = plan.right_offset
    out[:, :t] = left
    end = min(o + t, sw)
    if o < t:
        n = t - o
        l_part, r_part = left[:, o:t], right[:, :n]
        if plan.blend is Blend.AVERAGE:
            blended = 0.5 * (l_part + r_part)
        else:
            w = (np.arange(1, n + 1) / (n + 1))[None, :]
            blended = l_part + w * (r_part - l_part)
        out[:, o:t] = blended
        out[:, t:end] = right[:, n:end - o]
    else:
        out[:, o:end] = right[:, :end - o]
    if end < sw:
        out[:, end:] = right[:, -1:]
    return out


def stitch(left: FlowField, right: FlowField, plan: TilingPlan) -> FlowField:
    t = plan.tile_size
    for name, tile in (("left", left), ("right", right)):
        if tile.shape != (t, t):
            raise ValueError(f"{name} tile is {tile.width}x{tile.height}, expected {t}x{t}")
    return FlowField(_stitch_plane(left.u, right.u, plan), _stitch_plane(left.v, right.v, plan))


def restore_source(stitched: FlowField, plan: TilingPlan) -> FlowField:
    """Resample a stitched field onto the source grid, in source pixel units."""
    sw, sh = plan.stitched
    if stitched.shape != (sh, sw):
        raise ValueError(f"stitched field is {stitched.width}x{stitched.height}, plan says {sw}x{sh}")
    w, h = plan.source
    inv = plan.tile_size / plan.side
    xs = (np.arange(w) + 0.5) * inv - 0.5
    ys = (np.arange(h) + 0.5) * inv - 0.5
    gx, gy = np.meshgrid(xs, ys)
    u = sample_bilinear(stitched.u, gx, gy) * plan.pitch
    v = sample_bilinear(stitched.v, gx, gy) * plan.pitch
    return FlowField(u, v)


def tiled_flow(a, b, plan: TilingPlan, estimator: Callable) -> FlowField:
    """Estimate flow per tile with ``estimator(a_tile, b_tile)`` and stitch."""
    a_left, a_right = tile_images(a, plan)
    b_left, b_right = tile_images(b, plan)
    return stitch(estimator(a_left, b_left), estimator(a_right, b_right), plan)
