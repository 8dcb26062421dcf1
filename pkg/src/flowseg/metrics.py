"""Segmentation metrics and their aggregation into run, variant and group tables.

Per-frame scores use ``DC = 2TP / (2TP + FP + FN)``, ``recall = TP / (TP + FN)``
and ``precision = TP / (TP + FP)``.  A frame is excluded for a class when
the class is absent from both prediction and ground truth; when it is
present in only one of them the undefined ratio is scored 0.

Values are fractions in ``[0, 1]``; standard deviations are population
standard deviations over included frames.  The Mean row of a record is the
arithmetic mean of the two instrument classes.
"""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

CLASS_NAMES = {1: "Grasper", 2: "L-hook"}
VARIANTS = ("RGB", "t1 RGBof", "t5 RGBof", "t1 XY", "t5 XY", "t1 PC", "t5 PC")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def from_masks(cls, pred, gt, num_classes=3):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
        idx = gt.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
        cm = np.bincount(idx, minlength=num_classes ** 2).reshape(num_classes, num_classes)
        tp = np.diag(cm).astype(np.int64)
        return cls(tp, cm.sum(axis=0) - tp, cm.sum(axis=1) - tp)


@dataclass(frozen=True)
class FrameScore:
    dc: float
    recall: float
    precision: float


def _ratio(num, den):
    return num / den if den else 0.0


def scores_from_counts(tp, fp, fn) -> Optional[FrameScore]:
    if tp + fp + fn == 0:
        return None
    return FrameScore(_ratio(2 * tp, 2 * tp + fp + fn), _ratio(tp, tp + fn), _ratio(tp, tp + fp))


def frame_metrics(pred, gt, cls: int) -> Optional[FrameScore]:
    """Scores of one class on one frame, or None when it is absent from both masks."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    p = pred == cls
    g = gt == cls
    tp = int(np.count_nonzero(p & g))
    return scores_from_counts(tp, int(np.count_nonzero(p & ~g)), int(np.count_nonzero(~p & g)))


def frame_scores(pred, gt, classes=tuple(CLASS_NAMES)) -> Dict[int, Optional[FrameScore]]:
    num_classes = int(max(max(classes), np.max(pred), np.max(gt))) + 1
    counts = ConfusionCounts.from_masks(pred, gt, num_classes)
    return {c: scores_from_counts(int(counts.tp[c]), int(counts.fp[c]), int(counts.fn[c])) for c in classes}


@dataclass(frozen=True)
class ClassStats:
    dc: float
    dc_std: float
    recall: float
    precision: float

    @classmethod
    def undefined(cls):
        return cls(math.nan, math.nan, math.nan, math.nan)

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))


def _mean_stats(stats: Sequence[ClassStats]) -> ClassStats:
    return ClassStats(*np.mean([s.as_tuple() for s in stats], axis=0).tolist())


@dataclass(frozen=True)
class MetricsRecord:
    name: str
    classes: Mapping[str, ClassStats]
    mean: ClassStats = field(default=None)
    frames: int = 0

    def __post_init__(self):
        if self.mean is None:
            object.__setattr__(self, "mean", _mean_stats(list(self.classes.values())))

    def row(self):
        """Flat ``{column: value}`` in report order (fractions)."""
        out = {}
        for cname, s in list(self.classes.items()) + [("Mean", self.mean)]:
            out[f"{cname} DC"] = s.dc
            out[f"{cname} Recall"] = s.recall
            out[f"{cname} Precision"] = s.precision
        return out

    def to_dict(self):
        return {"name": self.name, "frames": self.frames,
                "classes": {k: asdict(v) for k, v in self.classes.items()},
                "mean": asdict(self.mean)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], {k: ClassStats(**v) for k, v in d["classes"].items()},
                   ClassStats(**d["mean"]), frames=int(d.get("frames", 0)))


def aggregate_frames(scores: Iterable[Mapping[int, Optional[FrameScore]]], name="run",
                     class_names=CLASS_NAMES) -> MetricsRecord:
    """Per-class mean and population std over the frames where each class counts."""
    per_class = {c: [] for c in class_names}
    n = 0
    for frame in scores:
        n += 1
        for c in class_names:
            s = frame.get(c)
            if s is not None:
                per_class[c].append((s.dc, s.recall, s.precision))
    classes = {}
    for c, label in class_names.items():
        rows = np.array(per_class[c], dtype=np.float64)
        if len(rows) == 0:
            classes[label] = ClassStats.undefined()
            continue
        classes[label] = ClassStats(float(rows[:, 0].mean()), float(rows[:, 0].std()),
                                    float(rows[:, 1].mean()), float(rows[:, 2].mean()))
    return MetricsRecord(name, classes, frames=n)


def evaluate_masks(preds, gts, name="run") -> MetricsRecord:
    return aggregate_frames((frame_scores(p, g) for p, g in zip(preds, gts)), name=name)


def average_runs(records: Sequence[MetricsRecord], name=None) -> MetricsRecord:
    """Element-wise mean of several runs of one variant."""
    if not records:
        raise ValueError("no records to average")
    keys = list(records[0].classes)
    for r in records[1:]:
        if list(r.classes) != keys:
            raise ValueError(f"class sets differ: {keys} vs {list(r.classes)}")
    classes = {k: _mean_stats([r.classes[k] for r in records]) for k in keys}
    mean = _mean_stats([r.mean for r in records])
    return MetricsRecord(name or records[0].name, classes, mean, frames=records[0].frames)


@dataclass(frozen=True)
class GroupSpec:
    name: str
    members: tuple


STANDARD_GROUPS = (
    GroupSpec("RGB", ("RGB",)),
    GroupSpec("OF", ("t1 RGBof", "t5 RGBof", "t1 XY", "t5 XY", "t1 PC", "t5 PC")),
    GroupSpec("t1", ("t1 RGBof", "t1 XY", "t1 PC")),
    GroupSpec("t5", ("t5 RGBof", "t5 XY", "t5 PC")),
    GroupSpec("RGBof", ("t1 RGBof", "t5 RGBof")),
    GroupSpec("XY", ("t1 XY", "t5 XY")),
    GroupSpec("PC", ("t1 PC", "t5 PC")),
)


def group_means(records: Mapping[str, MetricsRecord], spec: GroupSpec) -> MetricsRecord:
    missing = [m for m in spec.members if m not in records]
    if missing:
        raise KeyError(f"group {spec.name!r} is missing members {missing}")
    return average_runs([records[m] for m in spec.members], name=spec.name)
