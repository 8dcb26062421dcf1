"""Loaders for the reference result and dataset tables shipped with the package.

Percentages in the CSV files are converted to fractions on load; per-frame
DC standard deviations are already fractions.
"""
import csv
from importlib import resources

from .metrics import ClassStats, MetricsRecord

_PREFIXES = (("Grasper", "grasper"), ("L-hook", "lhook"))


def _rows(name):
    with resources.files("flowseg.data").joinpath(name).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _stats(row, prefix):
    std = row.get(f"{prefix}_dc_std")
    return ClassStats(
        dc=float(row[f"{prefix}_dc"]) / 100.0,
        dc_std=float(std) if std else float("nan"),
        recall=float(row[f"{prefix}_recall"]) / 100.0,
        precision=float(row[f"{prefix}_precision"]) / 100.0,
    )


def _record(row, name):
    classes = {label: _stats(row, prefix) for label, prefix in _PREFIXES}
    return MetricsRecord(name, classes, _stats(row, "mean"))


def run_records():
    """``{variant: [record per run]}`` in file order."""
    out = {}
    for row in _rows("reference_runs.csv"):
        out.setdefault(row["variant"], []).append(_record(row, row["variant"]))
    return out


def variant_records():
    return {row["variant"]: _record(row, row["variant"]) for row in _rows("reference_variants.csv")}


def group_records():
    return {row["group"]: _record(row, row["group"]) for row in _rows("reference_groups.csv")}


def case_counts():
    """Per-case rows: subset, case id, frames, Grasper frames, L-hook frames."""
    return [
        {"subset": r["subset"], "case": int(r["case"]), "frames": int(r["frames"]),
         "grasper": int(r["grasper"]), "lhook": int(r["lhook"])}
        for r in _rows("reference_cases.csv")
    ]


def subset_stats():
    return {
        r["subset"]: {
            "grasper_frames": int(r["grasper_frames"]), "grasper_pct": float(r["grasper_pct"]),
            "lhook_frames": int(r["lhook_frames"]), "lhook_pct": float(r["lhook_pct"]),
            "total_frames": int(r["total_frames"]), "dataset_pct": float(r["dataset_pct"]),
        }
        for r in _rows("reference_subsets.csv")
    }


def reference_split():
    """The case-level train/validation/test split as ``{subset: [case ids]}``."""
    split = {}
    for r in case_counts():
        split.setdefault(r["subset"], []).append(r["case"])
    return split
