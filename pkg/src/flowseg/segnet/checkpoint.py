"""Versioned binary checkpoint.

Layout (all integers little-endian)::

    8 bytes   magic b"FSEGNET\\0"
    u32       format version (1)
    u32 + N   UTF-8 JSON config block (network config, variant, normalisation)
    u32       tensor count, then per tensor:
                u16 + N  UTF-8 name
                u8       ndim, then ndim x u32 dims
                float32  data, C order
    u32       channel count, then float64 means and float64 stds
"""
import json
import struct
from pathlib import Path

import numpy as np

from ..encodings import EncodingKind, NormalizationPolicy
from .model import NetworkConfig, UNet
from .train import ChannelStats, TrainedModel, VariantSpec

MAGIC = b"FSEGNET\0"
VERSION = 1


def dumps(model: TrainedModel) -> bytes:
    v = model.variant
    config = {
        "network": model.net.cfg.to_dict(),
        "variant": {"name": v.name, "offset": v.offset, "kind": v.kind.value if v.kind else None},
        "norm_max_px": model.norm.max_px,
        "history": model.history,
    }
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(model.net.params))]
    for name in sorted(model.net.params):
        arr = np.ascontiguousarray(model.net.params[name], dtype="<f4")
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)) + enc)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    mean = np.asarray(model.stats.mean, dtype="<f8")
    std = np.asarray(model.stats.std, dtype="<f8")
    parts.append(struct.pack("<I", mean.size) + mean.tobytes() + std.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> TrainedModel:
    if data[:8] != MAGIC:
        raise ValueError("not a segmentation checkpoint (bad magic)")
    pos = 8
    version, n = struct.unpack_from("<II", data, pos)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos += 8
    config = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * size
    (channels,) = struct.unpack_from("<I", data, pos)
    pos += 4
    mean = np.frombuffer(data, dtype="<f8", count=channels, offset=pos).astype(np.float64)
    pos += 8 * channels
    std = np.frombuffer(data, dtype="<f8", count=channels, offset=pos).astype(np.float64)
    pos += 8 * channels
    if pos != len(data):
        raise ValueError(f"checkpoint has {len(data) - pos} trailing bytes")

    net = UNet(NetworkConfig(**config["network"]), dtype=np.float32)
    if set(params) != set(net.params):
        raise ValueError("checkpoint tensors do not match the network layout")
    net.params = params
    v = config["variant"]
    variant = VariantSpec(v["name"], v["offset"], EncodingKind(v["kind"]) if v["kind"] else None)
    norm = NormalizationPolicy(config["norm_max_px"])
    return TrainedModel(net, ChannelStats(mean, std), variant, norm, config.get("history", []))


def save(path, model: TrainedModel):
    Path(path).write_bytes(dumps(model))


def load(path) -> TrainedModel:
    return loads(Path(path).read_bytes())
