"""Input assembly, normalisation, training and prediction for the seven input variants."""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from ..augment import AugmentConfig, apply_to_flow, apply_to_image, apply_to_mask, sample_transform
from ..encodings import EncodingKind, NormalizationPolicy, encode
from ..imaging import FlowField
from .loss import LossWeights, dice_ce_loss
from .model import NetworkConfig, UNet

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class VariantSpec:
    name: str
    offset: Optional[int] = None
    kind: Optional[EncodingKind] = None

    @property
    def in_channels(self):
        return 3 + (self.kind.channels if self.kind else 0)

    @property
    def uses_flow(self):
        return self.kind is not None

    @classmethod
    def parse(cls, name):
        """``"RGB"`` or ``"t<offset> <RGBof|XY|PC>"``."""
        name = name.strip()
        if name == "RGB":
            return cls("RGB")
        try:
            pairing, kind = name.split()
            if not pairing.startswith("t"):
                raise ValueError
            return cls(name, int(pairing[1:]), EncodingKind(kind))
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; expected 'RGB' or e.g. 't1 RGBof'") from None


STANDARD_VARIANTS = tuple(VariantSpec.parse(n) for n in
                          ("RGB", "t1 RGBof", "t5 RGBof", "t1 XY", "t5 XY", "t1 PC", "t5 PC"))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 0.01
    momentum: float = 0.9
    loss: LossWeights = LossWeights()
    augment: AugmentConfig = AugmentConfig()
    crop_size: int = 128
    repeats: int = 4
    seed: int = 0
    norm: NormalizationPolicy = NormalizationPolicy()
    samples_per_epoch: Optional[int] = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.crop_size < 1:
            raise ValueError("epochs, batch size and crop size must be positive")


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3)
    mask: np.ndarray  # (H, W)
    flow: Optional[FlowField] = None
    frame_id: str = ""


@dataclass
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, planes: Sequence[np.ndarray]):
        """Per-channel statistics over ``(H, W, C)`` arrays (float64)."""
        flat = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1, p.shape[-1]) for p in planes])
        mean = flat.mean(axis=0)
        var = flat.var(axis=0)
        return cls(mean, np.sqrt(np.maximum(var, VARIANCE_FLOOR)))


def normalize_inputs(planes, stats: ChannelStats) -> np.ndarray:
    """Standardise the last axis of ``planes`` channel by channel."""
    planes = np.asarray(planes, dtype=np.float64)
    return (planes - stats.mean) / stats.std


def assemble_inputs(image, flow: Optional[FlowField], variant: VariantSpec,
                    norm: NormalizationPolicy = NormalizationPolicy()) -> np.ndarray:
    """RGB planes followed by the variant's flow encoding, ``(H, W, C)``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    if not variant.uses_flow:
        return image
    if flow is None:
        raise ValueError(f"variant {variant.name} needs a flow field")
    return np.concatenate([image, encode(flow, variant.kind, norm).planes], axis=-1)


@dataclass
class TrainedModel:
    net: UNet
    stats: ChannelStats
    variant: VariantSpec
    norm: NormalizationPolicy = NormalizationPolicy()
    history: List[dict] = field(default_factory=list)

    def logits(self, inputs):
        """Logits for ``(N, H, W, C)`` raw inputs of any size (padded internally)."""
        x = normalize_inputs(inputs, self.stats)
        n, h, w, _ = x.shape
        k = 2 ** self.net.cfg.depth
        ph, pw = (-h) % k, (-w) % k
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="edge")
        out = self.net.forward(x.transpose(0, 3, 1, 2).astype(self.net.dtype))
        return out[:, :, :h, :w]


def predict_logits(logits) -> np.ndarray:
    """Argmax over the class axis of ``(N, C, H, W)``; ties go to the lowest class."""
    return np.asarray(logits).argmax(axis=1)


def predict(model: TrainedModel, inputs, batch_size=8) -> np.ndarray:
    inputs = np.asarray(inputs)
    if inputs.ndim == 3:
        inputs = inputs[None]
    if inputs.shape[-1] != model.net.cfg.in_channels:
        raise ValueError(f"model expects {model.net.cfg.in_channels} channels, got {inputs.shape[-1]}")
    masks = [predict_logits(model.logits(inputs[i:i + batch_size])) for i in range(0, len(inputs), batch_size)]
    return np.concatenate(masks, axis=0)


def _random_crop(rng, arrays, size):
    h, w = arrays[0].shape[:2]
    ch, cw = min(size, h), min(size, w)
    y = int(rng.integers(0, h - ch + 1))
    x = int(rng.integers(0, w - cw + 1))
    return [a[y:y + ch, x:x + cw] for a in arrays]


def _augmented_inputs(sample: Sample, variant, tc: TrainConfig, rng):
    t = sample_transform(int(rng.integers(0, 2 ** 31 - 1)), tc.augment)
    image = apply_to_image(t, sample.image)
    mask = apply_to_mask(t, sample.mask)
    flow = None
    if variant.uses_flow:
        ft = t
        if t.elastic is not None and not tc.augment.elastic_on_flow:
            ft = replace(t, elastic=None)
        flow = apply_to_flow(ft, sample.flow)
    return assemble_inputs(image, flow, variant, tc.norm), mask


def _batches(samples, variant, tc, stats, rng, k):
    order = rng.permutation(len(samples))
    if tc.samples_per_epoch:
        reps = -(-tc.samples_per_epoch // len(samples))
        order = np.concatenate([rng.permutation(len(samples)) for _ in range(reps)])[:tc.samples_per_epoch]
    crop = tc.crop_size - tc.crop_size % k
    for i in range(0, len(order), tc.batch_size):
        xs, ys = [], []
        for j in order[i:i + tc.batch_size]:
            inputs, mask = _augmented_inputs(samples[j], variant, tc, rng)
            inputs, mask = _random_crop(rng, [inputs, mask], crop)
            xs.append(normalize_inputs(inputs, stats))
            ys.append(mask)
        h = min(x.shape[0] for x in xs) // k * k
        w = min(x.shape[1] for x in xs) // k * k
        yield (np.stack([x[:h, :w] for x in xs]).transpose(0, 3, 1, 2),
               np.stack([y[:h, :w] for y in ys]))


def evaluate_loss(model: TrainedModel, samples: Sequence[Sample], tc: TrainConfig, batch_size=8) -> float:
    total, count = 0.0, 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        inputs = np.stack([assemble_inputs(s.image, s.flow, model.variant, tc.norm) for s in chunk])
        masks = np.stack([s.mask for s in chunk])
        loss, _ = dice_ce_loss(model.logits(inputs), masks, tc.loss)
        total += loss * len(chunk)
        count += len(chunk)
    return total / max(count, 1)


def check_flow_available(samples: Sequence[Sample], variant: VariantSpec):
    from ..errors import MissingArtifactError
    if variant.uses_flow:
        missing = [s.frame_id for s in samples if s.flow is None]
        if missing:
            raise MissingArtifactError(
                f"variant {variant.name} is missing flow for {len(missing)} frames: {missing[:10]}")


def train(variant: VariantSpec, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          nc: NetworkConfig, tc: TrainConfig, dtype=np.float32) -> TrainedModel:
    """SGD with momentum and poly learning-rate decay; keeps the best-validation weights."""
    if nc.in_channels != variant.in_channels:
        raise ValueError(f"variant {variant.name} has {variant.in_channels} channels, network {nc.in_channels}")
    if not train_samples:
        raise ValueError("no training samples")
    check_flow_available(list(train_samples) + list(val_samples), variant)
    rng = np.random.default_rng(tc.seed)
    net = UNet(nc, dtype=dtype)
    stats = ChannelStats.fit([assemble_inputs(s.image, s.flow, variant, tc.norm) for s in train_samples])
    model = TrainedModel(net, stats, variant, tc.norm)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    k = 2 ** nc.depth
    best = (np.inf, None)
    for epoch in range(tc.epochs):
        lr = tc.learning_rate * (1 - epoch / tc.epochs) ** 0.9
        losses = []
        for x, y in _batches(train_samples, variant, tc, stats, rng, k):
            logits = net.forward(x.astype(dtype), keep_cache=True)
            loss, dz = dice_ce_loss(logits, y, tc.loss)
            grads = net.backward(dz)
            for name, g in grads.items():
                velocity[name] = tc.momentum * velocity[name] - lr * g
                net.params[name] += velocity[name]
            losses.append(loss)
        entry = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses))}
        if val_samples:
            entry["val_loss"] = evaluate_loss(model, val_samples, tc)
            if entry["val_loss"] < best[0]:
                best = (entry["val_loss"], {n: v.copy() for n, v in net.params.items()})
        model.history.append(entry)
        log.info("variant=%s epoch=%d train_loss=%.4f val_loss=%s", variant.name, epoch,
                 entry["train_loss"], f"{entry.get('val_loss', float('nan')):.4f}")
    if best[1] is not None:
        net.params = best[1]
    return model


def repeat_seeds(seed: int, repeats: int) -> List[int]:
    """Distinct, reproducible seeds for repeated trainings."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(repeats)]


def train_repeats(variant, train_samples, val_samples, nc: NetworkConfig, tc: TrainConfig) -> List[TrainedModel]:
    models = []
    for s in repeat_seeds(tc.seed, tc.repeats):
        models.append(train(variant, train_samples, val_samples, replace(nc, seed=s), replace(tc, seed=s)))
    return models
