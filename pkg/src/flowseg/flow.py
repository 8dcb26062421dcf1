"""Dense optical flow: coarse-to-fine Horn-Schunck with image warping.

The solver minimises the linearised brightness-constancy energy

    E(u, v) = sum_p (Ix u + Iy v + It)^2
              + alpha^2 / 4 * sum_{p~q} ((u_p - u_q)^2 + (v_p - v_q)^2)

over 4-connected neighbour pairs ``p~q``.  The quarter weight makes the
per-pixel minimiser for an interior pixel the classic update
``u = ubar - Ix (Ix ubar + Iy vbar + It) / (alpha^2 + Ix^2 + Iy^2)``.
Sweeps run in red-black order, so each half-sweep is an exact block
coordinate minimisation and the energy can never increase.

Luminance is scaled to 0..255 before solving; the default ``alpha`` is
calibrated for that range.
"""
import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import FlowField, resize_bilinear, to_luminance, warp_image

MIN_LEVEL_SIZE = 8


@dataclass(frozen=True)
class HSParams:
    alpha: float = 15.0
    iterations: int = 100
    epsilon: float = 1e-4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 4
    scale: float = 0.5
    warp_steps: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if not 0 < self.scale < 1:
            raise ValueError(f"scale must lie in (0, 1), got {self.scale}")
        if self.warp_steps < 1:
            raise ValueError(f"warp_steps must be >= 1, got {self.warp_steps}")

    def level_sizes(self, width, height):
        sizes = [(width, height)]
        for _ in range(self.levels - 1):
            w, h = sizes[-1]
            sizes.append((int(np.floor(w * self.scale + 0.5)), int(np.floor(h * self.scale + 0.5))))
        return sizes


class BoundaryPolicy(enum.Enum):
    ZERO_FLOW = "zero"
    CLAMP_TO_FIRST = "clamp"


@dataclass(frozen=True)
class FlowPairing:
    offset: int = 1
    boundary_policy: BoundaryPolicy = BoundaryPolicy.ZERO_FLOW

    def __post_init__(self):
        if self.offset < 1:
            raise ValueError(f"pairing offset must be positive, got {self.offset}")


def gaussian_pyramid(img, cfg: PyramidConfig):
    """Return ``[img, smaller, smaller, ...]`` with ``cfg.levels`` entries."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    sizes = cfg.level_sizes(w, h)
    cw, ch = sizes[-1]
    if cw < MIN_LEVEL_SIZE or ch < MIN_LEVEL_SIZE:
        raise ValueError(
            f"{cfg.levels} levels at scale {cfg.scale} reduce {w}x{h} to {cw}x{ch}, "
            f"below the {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE} minimum")
    # Anti-aliasing blur matched to the per-level decimation.
    sigma = np.sqrt(1.0 / cfg.scale ** 2 - 1.0) / 2.0
    axes_sigma = (sigma, sigma) + (0,) * (img.ndim - 2)
    levels = [img]
    for lw, lh in sizes[1:]:
        smoothed = gaussian_filter(levels[-1], axes_sigma, mode="nearest")
        levels.append(resize_bilinear(smoothed, lw, lh))
    return levels


def _neighbour_count(shape):
    h, w = shape
    n = np.full(shape, 4.0)
    n[0, :] -= 1
    n[-1, :] -= 1
    n[:, 0] -= 1
    n[:, -1] -= 1
    return n


def _neighbour_sum(x):
    s = np.zeros_like(x)
    s[1:, :] += x[:-1, :]
    s[:-1, :] += x[1:, :]
    s[:, 1:] += x[:, :-1]
    s[:, :-1] += x[:, 1:]
    return s


def hs_energy(u, v, ix, iy, it, alpha):
    """Horn-Schunck energy of the field ``(u, v)`` for the given derivatives."""
    data = np.sum((ix * u + iy * v + it) ** 2)
    smooth = (np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2)
              + np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2))
    return float(data + alpha ** 2 / 4.0 * smooth)


def _derivatives(a, b_warped):
    ay, ax = np.gradient(a)
    by, bx = np.gradient(b_warped)
    return 0.5 * (ax + bx), 0.5 * (ay + by), b_warped - a


def horn_schunck(a, b, p: HSParams = HSParams(), init: Optional[FlowField] = None,
                 energies: Optional[list] = None) -> FlowField:
    """Flow from ``a`` to ``b`` linearised around ``init``.

    ``b`` is warped back by ``init`` before differentiating; the returned
    field is the total displacement.  When ``energies`` is a list, the energy
    before the first sweep and after every iteration is appended to it.
    """
    la = to_luminance(a) * 255.0
    lb = to_luminance(b) * 255.0
    if la.shape != lb.shape:
        raise ValueError(f"frame size mismatch {la.shape} vs {lb.shape}")
    if init is None:
        init = FlowField.zeros(*la.shape)
    elif init.shape != la.shape:
        raise ValueError(f"initial flow {init.shape} does not match frames {la.shape}")

    ix, iy, it = _derivatives(la, warp_image(lb, init))
    u0 = np.array(init.u)
    v0 = np.array(init.v)
    # Data residual linearised around the initial field, in terms of total flow.
    it = it - ix * u0 - iy * v0

    n = _neighbour_count(la.shape)
    lam = p.alpha ** 2 * n / 4.0
    denom = lam + ix ** 2 + iy ** 2
    yy, xx = np.indices(la.shape)
    colours = [(yy + xx) % 2 == 0, (yy + xx) % 2 == 1]

    u, v = u0.copy(), v0.copy()
    if energies is not None:
        energies.append(hs_energy(u, v, ix, iy, it, p.alpha))
    for _ in range(p.iterations):
        u_prev, v_prev = u.copy(), v.copy()
        for mask in colours:
            ubar = _neighbour_sum(u) / n
            vbar = _neighbour_sum(v) / n
            corr = (ix * ubar + iy * vbar + it) / denom
            u = np.where(mask, ubar - ix * corr, u)
            v = np.where(mask, vbar - iy * corr, v)
        if energies is not None:
            energies.append(hs_energy(u, v, ix, iy, it, p.alpha))
        if np.mean(np.hypot(u - u_prev, v - v_prev)) < p.epsilon:
            break
    return FlowField(u, v)


def rescale_flow(f: FlowField, width: int, height: int) -> FlowField:
    """Resample a field onto a ``width`` x ``height`` grid, converting units."""
    if width < 1 or height < 1:
        raise ValueError(f"target size must be positive, got {width}x{height}")
    if (width, height) == (f.width, f.height):
        return f
    u = resize_bilinear(f.u, width, height) * (width / f.width)
    v = resize_bilinear(f.v, width, height) * (height / f.height)
    return FlowField(u, v)


def estimate_flow(a, b, cfg: PyramidConfig = PyramidConfig(), p: HSParams = HSParams(),
                  trace: Optional[list] = None) -> FlowField:
    """Coarse-to-fine flow from frame ``a`` to frame ``b``.

    ``a(x) ~ b(x + flow(x))``: a point at ``x`` in ``a`` moves to ``x + flow(x)``
    in ``b``.  With ``trace`` a list, one energy history per solver call
    (coarsest level first) is appended to it.
    """
    la = to_luminance(a)
    lb = to_luminance(b)
    if la.shape != lb.shape:
        raise ValueError(f"frame size mismatch {la.shape} vs {lb.shape}")
    pa = gaussian_pyramid(la, cfg)
    pb = gaussian_pyramid(lb, cfg)
    flow = None
    for level_a, level_b in zip(reversed(pa), reversed(pb)):
        h, w = level_a.shape
        flow = FlowField.zeros(h, w) if flow is None else rescale_flow(flow, w, h)
        for _ in range(cfg.warp_steps):
            energies = [] if trace is not None else None
            flow = horn_schunck(level_a, level_b, p, init=flow, energies=energies)
            if trace is not None:
                trace.append(energies)
    return flow


def pair_frames(clip: Sequence, index: int, pairing: FlowPairing):
    """Return ``(current, reference)`` ids; ``reference`` is None for a zero field."""
    if len(clip) == 0:
        raise ValueError("cannot pair frames of an empty clip")
    if not 0 <= index < len(clip):
        raise IndexError(f"frame index {index} outside clip of {len(clip)} frames")
    ref = index - pairing.offset
    if ref >= 0:
        return clip[index], clip[ref]
    if pairing.boundary_policy is BoundaryPolicy.ZERO_FLOW:
        return clip[index], None
    return clip[index], clip[0]


def flow_filename(frame_id: str, offset: int) -> str:
    return f"{frame_id}_t{offset}.flo"
