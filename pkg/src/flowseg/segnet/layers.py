"""NHWC building blocks with explicit backward passes.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3_forward(x, w, b):
    """Same-padded 3x3 convolution. ``x`` (N, H, W, C), ``w`` (O, C, 3, 3)."""
    n, h, wd, c = x.shape
    o = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * wd, c * 9)
    wmat = w.reshape(o, c * 9)
    out = cols @ wmat.T + b
    return out.reshape(n, h, wd, o), (x.shape, cols, w)


def conv3x3_backward(dout, cache):
    shape, cols, w = cache
    n, h, wd, c = shape
    o = w.shape[0]
    d2 = dout.reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(o, c * 9)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd, :] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def conv1x1_forward(x, w, b):
    """Pointwise convolution. ``w`` (O, C)."""
    n, h, wd, c = x.shape
    out = x.reshape(-1, c) @ w.T + b
    return out.reshape(n, h, wd, -1), (x, w)


def conv1x1_backward(dout, cache):
    x, w = cache
    c = x.shape[-1]
    d2 = dout.reshape(-1, w.shape[0])
    dw = d2.T @ x.reshape(-1, c)
    dx = (d2 @ w).reshape(x.shape)
    return dx, dw, d2.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x):
    """2x2 max pooling with stride 2; ties resolve to the first window element."""
    n, h, wd, c = x.shape
    win = x.reshape(n, h // 2, 2, wd // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, wd // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool_backward(dout, cache):
    shape, idx = cache
    n, h, wd, c = shape
    dwin = np.zeros(idx.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, h // 2, wd // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(shape)


def upconv_forward(x, w, b):
    """Transposed 2x2 convolution with stride 2. ``w`` (C, O, 2, 2)."""
    n, h, wd, c = x.shape
    o = w.shape[1]
    y = x.reshape(-1, c) @ w.reshape(c, o * 4)
    out = y.reshape(n, h, wd, o, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h, 2 * wd, o) + b
    return out, (x, w)


def upconv_backward(dout, cache):
    x, w = cache
    n, h, wd, c = x.shape
    o = w.shape[1]
    dy = dout.reshape(n, h, 2, wd, 2, o).transpose(0, 1, 3, 5, 2, 4).reshape(n * h * wd, o * 4)
    dw = (x.reshape(-1, c).T @ dy).reshape(w.shape)
    dx = (dy @ w.reshape(c, o * 4).T).reshape(x.shape)
    return dx, dw, dout.sum(axis=(0, 1, 2))
