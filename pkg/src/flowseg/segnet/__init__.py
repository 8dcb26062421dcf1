"""Small U-Net segmentation network with configurable input channels."""
from .loss import LossWeights, dice_ce_loss
from .model import NetworkConfig, UNet, forward, parameter_count, softmax
from .train import (STANDARD_VARIANTS, ChannelStats, Sample, TrainConfig, TrainedModel, VariantSpec,
                    assemble_inputs, normalize_inputs, predict, predict_logits, train, train_repeats)

__all__ = [
    "ChannelStats", "LossWeights", "NetworkConfig", "STANDARD_VARIANTS", "Sample", "TrainConfig",
    "TrainedModel", "UNet", "VariantSpec", "assemble_inputs", "dice_ce_loss", "forward",
    "normalize_inputs", "parameter_count", "predict", "predict_logits", "softmax", "train",
    "train_repeats",
]
