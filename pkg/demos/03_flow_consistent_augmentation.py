"""Geometric augmentation must act on flow the way it acts on the frames.

Transforming both frames and re-estimating should agree with transforming
the original estimate.  Photometric changes have no such action and are not
offered by the augmentation module.
"""
import numpy as np

from flowseg.augment import AugmentConfig, GeomTransform, apply_to_flow, apply_to_image, sample_transform
from flowseg.flow import PyramidConfig, estimate_flow
from flowseg.imaging import endpoint_error
from flowseg.synthetic import BlobTexture, translated_pair

rng = np.random.default_rng(1)
tex = BlobTexture.random(rng, 96, 96, n_blobs=60)
a, b, _ = translated_pair(tex, 96, 96, 1.5, -1.0)
cfg = PyramidConfig(levels=3)
base = estimate_flow(a, b, cfg)

for t in [GeomTransform(hflip=True), GeomTransform(rotation=np.pi / 2), GeomTransform(scale=1.25),
          GeomTransform(rotation=0.3)]:
    direct = estimate_flow(apply_to_image(t, a), apply_to_image(t, b), cfg)
    mapped = apply_to_flow(t, base)
    print(f"rot={t.rotation:+.2f} scale={t.scale:.2f} hflip={t.hflip}: EPE {endpoint_error(direct, mapped, 16):.3f} px")

print("a sampled training transform:", sample_transform(7, AugmentConfig()))
