"""Composite Dice + cross-entropy loss with its gradient w.r.t. the logits.

``loss = ce_w * mean_pixel_CE + dice_w * (1 - mean soft Dice)``.  Soft Dice
is computed per sample and per non-background class,
``(2 sum(p g) + s) / (sum(p) + sum(g) + s)`` with ``s = 1e-5``; a pair is
skipped when the class is absent from the target and no pixel of the sample
predicts it (argmax), which keeps empty classes from dominating.
"""
from dataclasses import dataclass

import numpy as np

from .model import softmax

SMOOTH = 1e-5


@dataclass(frozen=True)
class LossWeights:
    dice_w: float = 1.0
    ce_w: float = 1.0


def dice_ce_loss(logits, target, weights: LossWeights = LossWeights()):
    """Return ``(loss, dlogits)`` for logits ``(N, C, H, W)`` and integer target ``(N, H, W)``."""
    logits = np.asarray(logits)
    target = np.asarray(target)
    n, c, h, w = logits.shape
    if target.shape != (n, h, w):
        raise ValueError(f"target {target.shape} does not match logits {logits.shape}")
    # Loss arithmetic in float64 regardless of the network dtype.
    z = logits.astype(np.float64)
    p = softmax(z, axis=1)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, target[:, None].astype(np.intp), 1.0, axis=1)

    m = n * h * w
    logp = z - z.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    ce = -np.sum(onehot * logp) / m
    dz = weights.ce_w * (p - onehot) / m
    loss = weights.ce_w * ce

    if weights.dice_w:
        pred_cls = z.argmax(axis=1)
        inter = np.sum(p * onehot, axis=(2, 3))
        psum = p.sum(axis=(2, 3))
        gsum = onehot.sum(axis=(2, 3))
        include = np.zeros((n, c), dtype=bool)
        for k in range(1, c):
            include[:, k] = (gsum[:, k] > 0) | np.any(pred_cls == k, axis=(1, 2))
        k_count = int(include.sum())
        if k_count:
            denom = psum + gsum + SMOOTH
            dice = (2 * inter + SMOOTH) / denom
            loss += weights.dice_w * (1.0 - dice[include].sum() / k_count)
            # d dice / d p(x) = (2 g(x) denom - (2 I + s)) / denom^2
            dd = (2 * onehot * denom[..., None, None] - (2 * inter + SMOOTH)[..., None, None]) / denom[..., None, None] ** 2
            dp = -weights.dice_w / k_count * dd * include[..., None, None]
            dz += p * (dp - np.sum(p * dp, axis=1, keepdims=True))
    return float(loss), dz.astype(logits.dtype)
