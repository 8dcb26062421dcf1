"""Motion-aware surgical instrument segmentation toolkit.

Dense optical flow (pyramidal Horn-Schunck), three flow encodings used as
extra network inputs, flow-consistent geometric augmentation, two-tile flow
inference for wide frames, a small U-Net, and the metric aggregation used to
compare input variants.
"""
from .imaging import FlowField

__version__ = "0.1.0"
__all__ = ["FlowField", "__version__"]
