"""Dataset ingestion: class remapping, manifests, case-level splits, statistics
and a synthetic moving-instrument dataset in the same directory layout.

Layout (file names configurable through two templates)::

    <root>/video<case>/video<case>_<clip start>/frame_<n>_endo.png
    <root>/video<case>/video<case>_<clip start>/frame_<n>_endo_watershed_mask.png

A frame *contains* a class when at least one pixel carries its label.
"""
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import MissingArtifactError, ValidationError
from .imaging import read_mask_png, write_mask_png, write_png
from .synthetic import BlobTexture

BACKGROUND, GRASPER, LHOOK = 0, 1, 2
CLASS_LABELS = {BACKGROUND: "Background", GRASPER: "Grasper", LHOOK: "L-hook"}

IMAGE_TEMPLATE = "frame_{frame}_endo.png"
MASK_TEMPLATE = "frame_{frame}_endo_watershed_mask.png"


@dataclass(frozen=True)
class ClassMap:
    """Total map from raw labels onto Background / Grasper / L-hook."""

    mapping: Mapping[int, int]

    def __post_init__(self):
        m = {int(k): int(v) for k, v in dict(self.mapping).items()}
        if set(m.values()) != {BACKGROUND, GRASPER, LHOOK}:
            raise ValidationError(f"class map must be onto {{0, 1, 2}}, got values {sorted(set(m.values()))}")
        instruments = [k for k, v in m.items() if v != BACKGROUND]
        if len(instruments) != 2:
            raise ValidationError(f"exactly two raw labels must map to instruments, got {instruments}")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def from_instruments(cls, labels, grasper, lhook):
        return cls({lab: GRASPER if lab == grasper else LHOOK if lab == lhook else BACKGROUND
                    for lab in labels})

    def lookup_table(self):
        lut = np.full(max(self.mapping) + 1, -1, dtype=np.int64)
        for raw, new in self.mapping.items():
            lut[raw] = new
        return lut


# Class indices 0..12 as listed in the CholecSeg8k documentation.
CHOLECSEG8K_INDEXED = ClassMap.from_instruments(range(13), grasper=5, lhook=9)
# Gray levels used by the dataset's *_watershed_mask.png files.
CHOLECSEG8K_WATERSHED = ClassMap.from_instruments(
    (50, 11, 21, 13, 12, 31, 23, 24, 25, 32, 22, 33, 5), grasper=31, lhook=32)
IDENTITY = ClassMap({0: 0, 1: 1, 2: 2})


def remap_mask(raw, class_map: ClassMap) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.size and raw.min() < 0:
        raise ValidationError("raw masks must hold non-negative labels")
    lut = class_map.lookup_table()
    known = np.zeros(max(len(lut), int(raw.max()) + 1 if raw.size else 0), dtype=bool)
    known[:len(lut)] = lut >= 0
    bad = ~known[raw]
    if bad.any():
        labels, counts = np.unique(raw[bad], return_counts=True)
        detail = ", ".join(f"label {lab} ({cnt} px)" for lab, cnt in zip(labels, counts))
        raise ValidationError(f"unmapped raw labels: {detail}")
    return lut[raw]


@dataclass(frozen=True)
class FrameRecord:
    case: int
    clip: int
    index: int
    image: str
    mask: str
    grasper: bool
    lhook: bool

    @property
    def frame_id(self) -> str:
        return f"video{self.case:02d}_{self.clip:05d}_{self.index:05d}"


@dataclass(frozen=True)
class DatasetManifest:
    """Frames ordered by case, clip and index."""

    frames: Tuple[FrameRecord, ...]
    root: str = ""

    def __post_init__(self):
        frames = tuple(sorted(self.frames, key=lambda f: (f.case, f.clip, f.index)))
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    @property
    def cases(self) -> List[int]:
        return sorted({f.case for f in self.frames})

    def clips(self) -> Dict[Tuple[int, int], List[FrameRecord]]:
        out = {}
        for f in self.frames:
            out.setdefault((f.case, f.clip), []).append(f)
        return out

    def subset(self, cases) -> "DatasetManifest":
        keep = set(cases)
        return DatasetManifest(tuple(f for f in self.frames if f.case in keep), self.root)

    def check_ordering(self):
        """Frames in each clip must be strictly increasing and gap-free."""
        for key, frames in self.clips().items():
            idx = [f.index for f in frames]
            if idx != list(range(idx[0], idx[0] + len(idx))):
                raise ValidationError(f"clip {key} frames are not consecutive: {idx[:10]}...")

    def resolve(self, rel) -> Path:
        return Path(self.root) / rel

    def dumps(self) -> str:
        return "".join(json.dumps(asdict(f), sort_keys=True) + "\n" for f in self.frames)

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path, root=None):
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"manifest {path} not found")
        frames = [FrameRecord(**json.loads(line)) for line in path.read_text(encoding="utf-8").splitlines()
                  if line.strip()]
        return cls(tuple(frames), str(root if root is not None else path.parent))


def manifest_from_counts(rows: Sequence[Mapping], frames_per_clip=80) -> DatasetManifest:
    """Frame-level manifest reproducing per-case counts.

    Each row needs ``case``, ``frames``, ``grasper`` and ``lhook``; the first
    ``grasper`` (``lhook``) frames of the case are flagged as containing it.
    """
    frames = []
    for r in rows:
        for i in range(r["frames"]):
            clip = (i // frames_per_clip) * frames_per_clip
            frames.append(FrameRecord(r["case"], clip, i, "", "", i < r["grasper"], i < r["lhook"]))
    return DatasetManifest(tuple(frames))


@dataclass(frozen=True)
class CaseSplit:
    train: Tuple[int, ...]
    validation: Tuple[int, ...]
    test: Tuple[int, ...]

    @classmethod
    def from_mapping(cls, m):
        return cls(tuple(m["train"]), tuple(m["validation"]), tuple(m["test"]))


def split_by_cases(manifest: DatasetManifest, split: CaseSplit):
    """Return ``(train, validation, test)`` manifests; whole cases only."""
    parts = {"train": split.train, "validation": split.validation, "test": split.test}
    for name, cases in parts.items():
        if not cases:
            raise ValidationError(f"{name} subset has no cases")
    seen = {}
    for name, cases in parts.items():
        for c in cases:
            if c in seen:
                raise ValidationError(f"case {c} assigned to both {seen[c]} and {name}")
            seen[c] = name
    present = set(manifest.cases)
    unknown = sorted(set(seen) - present)
    if unknown:
        raise ValidationError(f"split names unknown cases {unknown}")
    uncovered = sorted(present - set(seen))
    if uncovered:
        raise ValidationError(f"cases {uncovered} are not assigned to any subset")
    return tuple(manifest.subset(parts[n]) for n in ("train", "validation", "test"))


def class_balance_stats(frames: DatasetManifest, dataset_total: Optional[int] = None) -> dict:
    """Frame counts containing each instrument and their share of the subset."""
    n = len(frames)
    if n == 0:
        raise ValidationError("cannot compute statistics of an empty subset")
    g = sum(f.grasper for f in frames.frames)
    lh = sum(f.lhook for f in frames.frames)
    total = dataset_total or n
    return {
        "total_frames": n,
        "grasper_frames": g,
        "grasper_pct": 100.0 * g / n,
        "lhook_frames": lh,
        "lhook_pct": 100.0 * lh / n,
        "dataset_pct": 100.0 * n / total,
    }


def split_stats(manifest: DatasetManifest, split: CaseSplit) -> Dict[str, dict]:
    subsets = split_by_cases(manifest, split)
    return {name: class_balance_stats(s, len(manifest))
            for name, s in zip(("train", "validation", "test"), subsets)}


_CASE_DIR = re.compile(r"^video(\d+)$")
_CLIP_DIR = re.compile(r"^video(\d+)_(\d+)$")


def _template_regex(template):
    head, tail = template.split("{frame}")
    return re.compile("^" + re.escape(head) + r"(\d+)" + re.escape(tail) + "$")


def build_manifest(root, class_map: ClassMap = CHOLECSEG8K_WATERSHED, image_template=IMAGE_TEMPLATE,
                   mask_template=MASK_TEMPLATE, workers=4) -> DatasetManifest:
    """Scan a dataset tree, remap every mask and record class presence."""
    root = Path(root)
    if not root.is_dir():
        raise MissingArtifactError(f"dataset root {root} does not exist")
    img_re = _template_regex(image_template)
    jobs = []
    for case_dir in sorted(p for p in root.iterdir() if p.is_dir() and _CASE_DIR.match(p.name)):
        case = int(_CASE_DIR.match(case_dir.name).group(1))
        for clip_dir in sorted(p for p in case_dir.iterdir() if p.is_dir() and _CLIP_DIR.match(p.name)):
            clip = int(_CLIP_DIR.match(clip_dir.name).group(2))
            for img in sorted(clip_dir.iterdir()):
                m = img_re.match(img.name)
                if not m:
                    continue
                n = int(m.group(1))
                mask = clip_dir / mask_template.format(frame=n)
                if not mask.exists():
                    raise MissingArtifactError(f"frame {img.relative_to(root)} has no mask {mask.name}")
                jobs.append((case, clip, n, img.relative_to(root), mask.relative_to(root)))
    if not jobs:
        raise ValidationError(f"no frames matching {image_template!r} under {root}")

    def presence(job):
        labels = remap_mask(read_mask_png(root / job[4]), class_map)
        return bool((labels == GRASPER).any()), bool((labels == LHOOK).any())

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        flags = list(pool.map(presence, jobs))
    frames = tuple(FrameRecord(c, k, n, i.as_posix(), m.as_posix(), g, lh)
                   for (c, k, n, i, m), (g, lh) in zip(jobs, flags))
    manifest = DatasetManifest(frames, str(root))
    manifest.check_ordering()
    return manifest


@dataclass(frozen=True)
class SynthParams:
    cases: int = 4
    clips_per_case: int = 2
    frames_per_clip: int = 16
    width: int = 160
    height: int = 128
    slow_speed: float = 0.8
    fast_speed: float = 3.2
    background_speed: float = 0.3
    p_grasper: float = 0.9
    p_lhook: float = 0.5

    def __post_init__(self):
        if min(self.cases, self.clips_per_case, self.frames_per_clip) < 1:
            raise ValidationError("cases, clips and frames per clip must be positive")
        if self.width < self.height:
            raise ValidationError("synthetic frames must be landscape")
        if self.fast_speed < 3 * self.slow_speed:
            raise ValidationError("the fast tool must move at least three times faster than the slow one")


@dataclass
class _Tool:
    label: int
    width: float
    length: float
    anchor: np.ndarray
    centre: np.ndarray
    radius: np.ndarray
    omega: float
    phase: float
    colour: np.ndarray
    tip_colour: np.ndarray
    stripe: float

    def tip(self, t):
        ang = self.omega * t + self.phase
        return self.centre + self.radius * np.array([np.cos(ang), np.sin(ang)])

    def render(self, img, mask, xx, yy, t):
        tip = self.tip(t)
        axis = self.anchor - tip
        axis /= np.linalg.norm(axis)
        rx, ry = xx - tip[0], yy - tip[1]
        s = rx * axis[0] + ry * axis[1]
        d = -rx * axis[1] + ry * axis[0]
        inside = (s >= 0) & (s <= self.length) & (np.abs(d) <= self.width / 2)
        shade = 0.75 + 0.25 * np.cos(np.pi * d / self.width) * (0.8 + 0.2 * np.cos(s / self.stripe))
        col = self.colour[None, None, :] * shade[..., None]
        near_tip = s < 1.6 * self.width
        col = np.where(near_tip[..., None], self.tip_colour[None, None, :] * shade[..., None], col)
        img[inside] = np.clip(col[inside], 0, 1)
        mask[inside] = self.label


def _make_tool(rng, label, speed, w, h):
    side = rng.integers(4)
    edge = {0: (rng.uniform(0, w), -0.3 * h), 1: (rng.uniform(0, w), 1.3 * h),
            2: (-0.3 * w, rng.uniform(0, h)), 3: (1.3 * w, rng.uniform(0, h))}[int(side)]
    centre = np.array([rng.uniform(0.3, 0.7) * w, rng.uniform(0.3, 0.7) * h])
    radius = np.array([rng.uniform(0.1, 0.2) * w, rng.uniform(0.1, 0.2) * h])
    # Tip speed along the ellipse is about omega * mean radius.
    omega = speed / radius.mean() * rng.choice([-1.0, 1.0])
    if label == GRASPER:
        width, colour, tip = 0.13 * h, np.array([0.62, 0.66, 0.72]), np.array([0.45, 0.48, 0.52])
    else:
        width, colour, tip = 0.08 * h, np.array([0.22, 0.22, 0.26]), np.array([0.92, 0.9, 0.75])
    return _Tool(label, width, 2.0 * max(w, h), np.array(edge), centre, radius, omega,
                 rng.uniform(0, 2 * np.pi), colour, tip, stripe=rng.uniform(2.0, 4.0))


def render_clip(seed, params: SynthParams):
    """Frames ``(H, W, 3)`` and masks for one clip."""
    rng = np.random.default_rng(seed)
    w, h = params.width, params.height
    tex = [BlobTexture.random(rng, w, h, n_blobs=50, sigma_range=(5.0, 14.0)) for _ in range(3)]
    tissue = np.array([[0.78, 0.32, 0.28], [0.92, 0.62, 0.52], [0.55, 0.18, 0.2]])
    drift = rng.normal(size=2)
    drift *= params.background_speed / np.linalg.norm(drift)
    tools = []
    if rng.uniform() < params.p_grasper:
        tools.append(_make_tool(rng, GRASPER, params.slow_speed, w, h))
    if rng.uniform() < params.p_lhook:
        tools.append(_make_tool(rng, LHOOK, params.fast_speed, w, h))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    frames, masks = [], []
    for t in range(params.frames_per_clip):
        bx, by = xx - drift[0] * t, yy - drift[1] * t
        weights = np.stack([tx(bx, by) for tx in tex], axis=-1)
        weights = weights / weights.sum(axis=-1, keepdims=True)
        img = np.clip(weights @ tissue, 0, 1)
        mask = np.zeros((h, w), dtype=np.int64)
        for tool in tools:
            tool.render(img, mask, xx, yy, t)
        frames.append(img)
        masks.append(mask)
    return frames, masks


def synth_dataset(root, seed: int, params: SynthParams = SynthParams(),
                  image_template=IMAGE_TEMPLATE, mask_template=MASK_TEMPLATE) -> Path:
    """Write a deterministic synthetic dataset with the real dataset's layout.

    Masks are already in the 3-class label space.  Class 2 ("fast tool")
    is the rarer one and moves at least three times faster than class 1.
    """
    root = Path(root)
    seeds = np.random.SeedSequence(seed).spawn(params.cases * params.clips_per_case)
    k = 0
    for case in range(1, params.cases + 1):
        for clip_no in range(params.clips_per_case):
            start = clip_no * params.frames_per_clip
            clip_dir = root / f"video{case:02d}" / f"video{case:02d}_{start:05d}"
            clip_dir.mkdir(parents=True, exist_ok=True)
            frames, masks = render_clip(seeds[k], params)
            k += 1
            for i, (img, mask) in enumerate(zip(frames, masks)):
                n = start + i
                write_png(clip_dir / image_template.format(frame=n), img)
                write_mask_png(clip_dir / mask_template.format(frame=n), mask)
    return root
