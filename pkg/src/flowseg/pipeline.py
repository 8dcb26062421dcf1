"""Dataset-level steps shared by the command line and the demos.

Flow for a frame is estimated from the current frame to its reference
frame (``t`` frames earlier), so the field lives on the grid of the frame
whose mask it accompanies.  Artifacts sit beside the source frame::

    frame_<n>_endo_t<offset>.flo          raw flow, source resolution
    frame_<n>_endo_t<offset>_rgbof.png    colour-wheel encoding
    frame_<n>_endo_t<offset>_xy.flo       XY planes
    frame_<n>_endo_t<offset>_pc.flo       polar planes
"""
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import flo
from .dataset import DatasetManifest, FrameRecord
from .encodings import EncodingKind, NormalizationPolicy, encode, save_encoding
from .errors import MissingArtifactError
from .flow import BoundaryPolicy, FlowPairing, HSParams, PyramidConfig, estimate_flow, pair_frames
from .imaging import FlowField, read_mask_png, read_png
from .metrics import MetricsRecord, aggregate_frames, frame_scores
from .segnet.train import Sample, TrainedModel, VariantSpec, assemble_inputs, predict
from .tiling import Blend, plan_tiles, restore_source, tiled_flow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowSettings:
    tile_size: int = 256
    blend: Blend = Blend.LINEAR_FEATHER
    pyramid: PyramidConfig = PyramidConfig()
    hs: HSParams = HSParams()
    boundary: BoundaryPolicy = BoundaryPolicy.ZERO_FLOW

    def fingerprint(self) -> str:
        d = asdict(self)
        d["blend"] = self.blend.value
        d["boundary"] = self.boundary.value
        return json.dumps(d, sort_keys=True)


def frame_stem(manifest: DatasetManifest, frame: FrameRecord) -> Path:
    img = manifest.resolve(frame.image)
    return img.with_name(img.stem)


def flow_path(manifest, frame, offset) -> Path:
    stem = frame_stem(manifest, frame)
    return stem.with_name(f"{stem.name}_t{offset}.flo")


def flow_pairs(manifest: DatasetManifest, pairing: FlowPairing):
    """``(frame, reference frame or None)`` for every frame of the manifest."""
    out = []
    for frames in manifest.clips().values():
        for i in range(len(frames)):
            out.append(pair_frames(frames, i, pairing))
    return out


def frame_flow(current, reference, settings: FlowSettings) -> FlowField:
    """Two-tile flow from ``current`` to ``reference`` at source resolution."""
    h, w = np.asarray(current).shape[:2]
    plan = plan_tiles(w, h, settings.tile_size, settings.blend)

    def est(a, b):
        return estimate_flow(a, b, settings.pyramid, settings.hs)

    return restore_source(tiled_flow(current, reference, plan, est), plan)


def _hash_files(*paths, extra=""):
    h = hashlib.sha256(extra.encode("utf-8"))
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


class CompletionIndex:
    """JSON map of artifact path -> hash of everything that produced it."""

    def __init__(self, path):
        self.path = Path(path)
        self.entries: Dict[str, str] = {}
        if self.path.exists():
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))

    def is_current(self, artifact, digest):
        return self.entries.get(str(artifact)) == digest and Path(artifact).exists()

    def record(self, artifact, digest):
        self.entries[str(artifact)] = digest

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.entries, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _flow_job(args):
    cur_path, ref_path, out_path, settings = args
    current = read_png(cur_path)
    if ref_path is None:
        f = FlowField.zeros(*current.shape[:2])
    else:
        f = frame_flow(current, read_png(ref_path), settings)
    flo.save_flo(out_path, f)
    return str(out_path)


def compute_flows(manifest: DatasetManifest, offsets: Sequence[int], settings: FlowSettings = FlowSettings(),
                  workers: int = 1, index_path=None) -> dict:
    """Write raw ``.flo`` files for every frame and offset; skips current artifacts."""
    index = CompletionIndex(index_path or Path(manifest.root) / "flow_index.json")
    jobs, digests = [], []
    skipped = 0
    for offset in offsets:
        pairing = FlowPairing(offset, settings.boundary)
        for frame, ref in flow_pairs(manifest, pairing):
            out = flow_path(manifest, frame, offset)
            srcs = [manifest.resolve(frame.image)] + ([manifest.resolve(ref.image)] if ref else [])
            for s in srcs:
                if not s.exists():
                    raise MissingArtifactError(f"frame image {s} not found")
            digest = _hash_files(*srcs, extra=settings.fingerprint() + f"|ref={ref is not None}")
            if index.is_current(out, digest):
                skipped += 1
                continue
            jobs.append((srcs[0], srcs[1] if ref else None, out, settings))
            digests.append((out, digest))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_flow_job, jobs, chunksize=4))
    else:
        for j in jobs:
            _flow_job(j)
    for out, digest in digests:
        index.record(out, digest)
    index.save()
    log.info("flow: %d written, %d up to date", len(jobs), skipped)
    return {"written": len(jobs), "skipped": skipped}


def render_representations(manifest: DatasetManifest, offsets: Sequence[int], kinds=tuple(EncodingKind),
                           norm: NormalizationPolicy = NormalizationPolicy(), index_path=None) -> dict:
    index = CompletionIndex(index_path or Path(manifest.root) / "repr_index.json")
    written = skipped = 0
    for offset in offsets:
        for frame in manifest.frames:
            src = flow_path(manifest, frame, offset)
            if not src.exists():
                raise MissingArtifactError(f"flow {src} not found; run the flow step first")
            digest = _hash_files(src, extra=norm.describe())
            stem = src.with_suffix("")
            f = None
            for kind in kinds:
                kind = EncodingKind(kind)
                out = stem.with_name(stem.name + {"RGBof": "_rgbof.png", "XY": "_xy.flo", "PC": "_pc.flo"}[kind.value])
                if index.is_current(out, digest):
                    skipped += 1
                    continue
                f = f or flo.load_flo(src)
                save_encoding(stem, encode(f, kind, norm))
                index.record(out, digest)
                written += 1
    index.save()
    return {"written": written, "skipped": skipped}


def load_samples(manifest: DatasetManifest, variant: Optional[VariantSpec] = None,
                 class_map=None) -> List[Sample]:
    """Images, remapped masks and (for flow variants) raw flow at source resolution."""
    from .dataset import remap_mask
    samples = []
    missing = []
    for frame in manifest.frames:
        image = read_png(manifest.resolve(frame.image))
        if image.ndim == 2:
            image = np.repeat(image[..., None], 3, axis=2)
        mask = read_mask_png(manifest.resolve(frame.mask))
        if class_map is not None:
            mask = remap_mask(mask, class_map)
        f = None
        if variant is not None and variant.uses_flow:
            p = flow_path(manifest, frame, variant.offset)
            if p.exists():
                f = flo.load_flo(p)
            else:
                missing.append(frame.frame_id)
        samples.append(Sample(image, mask, f, frame.frame_id))
    if missing:
        raise MissingArtifactError(
            f"variant {variant.name} is missing flow for {len(missing)} frames: {missing[:10]}")
    return samples


def evaluate_model(model: TrainedModel, samples: Sequence[Sample], name=None) -> MetricsRecord:
    """Predict every sample at full resolution and aggregate per-frame scores."""
    scores = []
    for s in samples:
        inputs = assemble_inputs(s.image, s.flow, model.variant, model.norm)
        pred = predict(model, inputs[None])[0]
        scores.append(frame_scores(pred, s.mask))
    return aggregate_frames(scores, name=name or model.variant.name)
