"""A small U-Net with analytic gradients.

Encoder level ``l`` (``l = 0 .. depth-1``) runs two 3x3 conv + ReLU blocks of
width ``base * 2**l`` and a 2x2 max pool; a bottleneck of width
``base * 2**depth`` follows; each decoder level upsamples with a 2x2
transposed convolution, concatenates the skip features and runs two more
conv + ReLU blocks.  A 1x1 convolution produces the class logits.

Parameter count, with ``w_l = base * 2**l`` and ``c_0 = in_channels``::

    sum_l [9 c_l w_l + 9 w_l^2 + 2 w_l]              encoder, c_l = w_{l-1}
    + 9 w_{d-1} w_d + 9 w_d^2 + 2 w_d                bottleneck
    + sum_l [4 w_{l+1} w_l + 27 w_l^2 + 3 w_l]        decoder
    + base * classes + classes                       head
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import layers

IN_CHANNELS = {"RGB": 3, "XY": 5, "PC": 5, "RGBof": 6}


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 3
    classes: int = 3
    depth: int = 3
    base_width: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.in_channels < 1 or self.classes < 2 or self.depth < 1 or self.base_width < 1:
            raise ValueError(f"invalid network config {self}")

    def widths(self):
        return [self.base_width * 2 ** l for l in range(self.depth + 1)]

    def to_dict(self):
        return asdict(self)


def parameter_count(cfg: NetworkConfig) -> int:
    w = cfg.widths()
    d = cfg.depth
    total = 0
    cin = cfg.in_channels
    for l in range(d):
        total += 9 * cin * w[l] + 9 * w[l] ** 2 + 2 * w[l]
        cin = w[l]
    total += 9 * w[d - 1] * w[d] + 9 * w[d] ** 2 + 2 * w[d]
    for l in range(d):
        total += 4 * w[l + 1] * w[l] + 27 * w[l] ** 2 + 3 * w[l]
    return total + cfg.base_width * cfg.classes + cfg.classes


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class UNet:
    def __init__(self, cfg: NetworkConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = self._init_params(np.random.default_rng(cfg.seed))

    def _init_params(self, rng):
        cfg, dt = self.cfg, self.dtype
        w = cfg.widths()
        p = {}

        def conv(name, cin, cout):
            p[name + ".w"] = _he(rng, (cout, cin, 3, 3), 9 * cin, dt)
            p[name + ".b"] = np.zeros(cout, dtype=dt)

        cin = cfg.in_channels
        for l in range(cfg.depth):
            conv(f"enc{l}.conv1", cin, w[l])
            conv(f"enc{l}.conv2", w[l], w[l])
            cin = w[l]
        conv("bottleneck.conv1", w[cfg.depth - 1], w[cfg.depth])
        conv("bottleneck.conv2", w[cfg.depth], w[cfg.depth])
        for l in reversed(range(cfg.depth)):
            p[f"dec{l}.up.w"] = _he(rng, (w[l + 1], w[l], 2, 2), w[l + 1], dt)
            p[f"dec{l}.up.b"] = np.zeros(w[l], dtype=dt)
            conv(f"dec{l}.conv1", 2 * w[l], w[l])
            conv(f"dec{l}.conv2", w[l], w[l])
        p["head.w"] = _he(rng, (cfg.classes, w[0]), w[0], dt)
        p["head.b"] = np.zeros(cfg.classes, dtype=dt)
        return p

    def num_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    def astype(self, dtype):
        net = UNet.__new__(UNet)
        net.cfg = self.cfg
        net.dtype = np.dtype(dtype)
        net.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return net

    def _conv_relu(self, x, name, caches):
        y, c1 = layers.conv3x3_forward(x, self.params[name + ".w"], self.params[name + ".b"])
        y, c2 = layers.relu_forward(y)
        caches.append((name, c1, c2))
        return y

    def forward(self, x, keep_cache=False):
        """Logits ``(N, classes, H, W)`` for an NCHW batch.

        ``H`` and ``W`` must be divisible by ``2**depth``.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected (N, {self.cfg.in_channels}, H, W) input, got {x.shape}")
        k = 2 ** self.cfg.depth
        if x.shape[2] % k or x.shape[3] % k:
            raise ValueError(f"spatial size {x.shape[2:]} must be divisible by {k}")
        h = x.transpose(0, 2, 3, 1)
        caches = []
        skips = []
        pools = []
        for l in range(self.cfg.depth):
            h = self._conv_relu(h, f"enc{l}.conv1", caches)
            h = self._conv_relu(h, f"enc{l}.conv2", caches)
            skips.append(h)
            h, pc = layers.maxpool_forward(h)
            pools.append(pc)
        h = self._conv_relu(h, "bottleneck.conv1", caches)
        h = self._conv_relu(h, "bottleneck.conv2", caches)
        ups = []
        for l in reversed(range(self.cfg.depth)):
            h, uc = layers.upconv_forward(h, self.params[f"dec{l}.up.w"], self.params[f"dec{l}.up.b"])
            ups.append(uc)
            h = np.concatenate([h, skips[l]], axis=-1)
            h = self._conv_relu(h, f"dec{l}.conv1", caches)
            h = self._conv_relu(h, f"dec{l}.conv2", caches)
        logits, hc = layers.conv1x1_forward(h, self.params["head.w"], self.params["head.b"])
        out = logits.transpose(0, 3, 1, 2)
        if keep_cache:
            self._cache = (caches, pools, ups, hc)
        return out

    def backward(self, dlogits):
        """Parameter gradients for the upstream gradient of the last ``forward``."""
        caches, pools, ups, hc = self._cache
        grads = {}
        caches = list(caches)
        d = np.asarray(dlogits, dtype=self.dtype).transpose(0, 2, 3, 1)
        d, grads["head.w"], grads["head.b"] = layers.conv1x1_backward(d, hc)

        def conv_relu_back(d):
            name, c1, c2 = caches.pop()
            d = layers.relu_backward(d, c2)
            d, grads[name + ".w"], grads[name + ".b"] = layers.conv3x3_backward(d, c1)
            return d

        dskips = {}
        for i, l in enumerate(range(self.cfg.depth)):
            d = conv_relu_back(d)
            d = conv_relu_back(d)
            w_up = self.params[f"dec{l}.up.w"].shape[1]
            d, dskips[l] = d[..., :w_up], d[..., w_up:]
            d, grads[f"dec{l}.up.w"], grads[f"dec{l}.up.b"] = layers.upconv_backward(d, ups[-1 - i])
        d = conv_relu_back(d)
        d = conv_relu_back(d)
        for l in reversed(range(self.cfg.depth)):
            d = layers.maxpool_backward(d, pools[l]) + dskips[l]
            d = conv_relu_back(d)
            d = conv_relu_back(d)
        self._cache = None
        return grads


def forward(net: UNet, batch):
    return net.forward(batch)


def softmax(logits, axis=1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
