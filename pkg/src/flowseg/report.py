"""Tables, CSV files and a flow contact sheet for a set of metric records.

Percentages are printed with two decimals, rounding half up.  Values are
first rounded to nine decimals so binary noise (53.974999... for an exact
53.975) does not decide the direction.
"""
import csv
import io
import math
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .imaging import resize_bilinear, write_png
from .metrics import MetricsRecord

CLASS_ORDER = ("Grasper", "L-hook", "Mean")
METRIC_ORDER = ("DC", "Recall", "Precision")
COLUMNS = tuple(f"{c} {m}" for c in CLASS_ORDER for m in METRIC_ORDER)


def format_pct(value: float) -> str:
    if value is None or math.isnan(value):
        return "n/a"
    d = Decimal(repr(round(value * 100.0, 9)))
    return str(d.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def records_csv(records: Sequence[MetricsRecord], label="variant") -> str:
    rows = [[r.name] + [format_pct(r.row()[c]) for c in COLUMNS] for r in records]
    return _csv_text([label] + list(COLUMNS), rows)


def runs_csv(runs: Mapping[str, Sequence[MetricsRecord]]) -> str:
    """Per-training rows with DC population standard deviations (fractions)."""
    header = ["variant", "run"]
    for c in CLASS_ORDER:
        header += [f"{c} DC", f"{c} DC std (pop)", f"{c} Recall", f"{c} Precision"]
    rows = []
    for variant, recs in runs.items():
        for i, r in enumerate(recs):
            row = [variant, str(i)]
            for s in list(r.classes.values()) + [r.mean]:
                std = "n/a" if math.isnan(s.dc_std) else f"{s.dc_std:.3f}"
                row += [format_pct(s.dc), std, format_pct(s.recall), format_pct(s.precision)]
            rows.append(row)
    return _csv_text(header, rows)


def text_table(records: Sequence[MetricsRecord], title: str) -> str:
    name_w = max([len(r.name) for r in records] + [8])
    head1 = " " * name_w + " | " + " | ".join(f"{c:^26}" for c in CLASS_ORDER)
    head2 = " " * name_w + " | " + " | ".join(
        " ".join(f"{m[:6]:>8}" for m in METRIC_ORDER) for _ in CLASS_ORDER)
    lines = [title, head1, head2, "-" * len(head2)]
    for r in records:
        row = r.row()
        cells = []
        for c in CLASS_ORDER:
            cells.append(" ".join(f"{format_pct(row[f'{c} {m}']):>8}" for m in METRIC_ORDER))
        lines.append(f"{r.name:<{name_w}} | " + " | ".join(cells))
    return "\n".join(lines) + "\n"


def contact_sheet(panels: Sequence[Sequence[np.ndarray]], cell=(128, 96), gap=4) -> np.ndarray:
    """Grid of RGB panels (rows of images), each resized to ``cell`` = (w, h)."""
    cw, ch = cell
    n_rows = len(panels)
    n_cols = max(len(r) for r in panels)
    sheet = np.ones((n_rows * (ch + gap) + gap, n_cols * (cw + gap) + gap, 3))
    for i, row in enumerate(panels):
        for j, img in enumerate(row):
            img = np.asarray(img, dtype=np.float64)
            if img.ndim == 2:
                img = np.repeat(img[..., None], 3, axis=2)
            y, x = gap + i * (ch + gap), gap + j * (cw + gap)
            sheet[y:y + ch, x:x + cw] = resize_bilinear(img, cw, ch)
    return sheet


def render_report(records: Sequence[MetricsRecord], groups: Sequence[MetricsRecord] = (),
                  out_dir: Optional[Path] = None, runs: Optional[Mapping] = None,
                  panels: Optional[Sequence[Sequence[np.ndarray]]] = None,
                  notes: Sequence[str] = ()) -> str:
    """Render the report text; with ``out_dir`` also write CSV/PNG artifacts."""
    if not records:
        raise ValueError("render_report needs at least one record")
    parts = ["Percentages rounded half-up to two decimals; DC std is the population std over frames.\n"]
    parts += [f"{n}\n" for n in notes]
    parts.append(text_table(records, "Per-variant performance"))
    if groups:
        parts.append("\n" + text_table(groups, "Grouped means"))
    text = "".join(parts)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "variants.csv").write_text(records_csv(records), encoding="utf-8", newline="\n")
        if groups:
            (out_dir / "groups.csv").write_text(records_csv(groups, "group"), encoding="utf-8", newline="\n")
        if runs:
            (out_dir / "runs.csv").write_text(runs_csv(runs), encoding="utf-8", newline="\n")
        (out_dir / "report.txt").write_text(text, encoding="utf-8", newline="\n")
        if panels:
            write_png(out_dir / "flow_panels.png", contact_sheet(panels))
    return text
