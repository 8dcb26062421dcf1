import csv
import io

import numpy as np
import pytest

from flowseg import reference
from flowseg.imaging import read_png
from flowseg.metrics import STANDARD_GROUPS, average_runs, group_means
from flowseg.report import contact_sheet, format_pct, records_csv, render_report, runs_csv


def test_format_pct_half_up():
    assert format_pct(0.53975) == "53.98"
    assert format_pct(0.12345) == "12.35"
    assert format_pct(0.5) == "50.00"
    assert format_pct(float("nan")) == "n/a"


def test_single_record_csv():
    rgb = reference.variant_records()["RGB"]
    rows = list(csv.reader(io.StringIO(records_csv([rgb]))))
    assert len(rows) == 2
    assert rows[0][0] == "variant" and rows[1][0] == "RGB"
    assert rows[1][1] == "75.98"


def _tables():
    runs = reference.run_records()
    averaged = {k: average_runs(v, k) for k, v in runs.items()}
    groups = [group_means(averaged, g) for g in STANDARD_GROUPS]
    return runs, averaged, groups


def _cells(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    return {r[next(iter(r))]: r for r in rows}


def test_report_matches_fixture_tables(tmp_path):
    runs, averaged, groups = _tables()
    render_report(list(averaged.values()), groups, out_dir=tmp_path, runs=runs)
    produced = _cells((tmp_path / "variants.csv").read_text())
    assert len(produced) == 7
    for name, rec in reference.variant_records().items():
        for col, value in rec.row().items():
            assert abs(float(produced[name][col]) - value * 100) <= 0.01 + 1e-9, (name, col)
    produced = _cells((tmp_path / "groups.csv").read_text())
    assert len(produced) == 7
    for name, rec in reference.group_records().items():
        for col, value in rec.row().items():
            assert abs(float(produced[name][col]) - value * 100) <= 0.01 + 1e-9, (name, col)
    assert (tmp_path / "runs.csv").read_text().count("\n") == 29


def test_report_is_byte_stable(tmp_path):
    runs, averaged, groups = _tables()
    a = render_report(list(averaged.values()), groups, out_dir=tmp_path / "a", runs=runs)
    b = render_report(list(averaged.values()), groups, out_dir=tmp_path / "b", runs=runs)
    assert a == b
    for name in ("variants.csv", "groups.csv", "runs.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_runs_csv_reports_population_std():
    text = runs_csv({"RGB": reference.run_records()["RGB"][:1]})
    assert "DC std (pop)" in text.splitlines()[0]
    assert "0.267" in text


def test_contact_sheet(tmp_path, rng):
    panels = [[rng.uniform(size=(20, 30, 3)), rng.uniform(size=(10, 10))], [rng.uniform(size=(5, 5, 3))]]
    sheet = contact_sheet(panels, cell=(32, 24), gap=2)
    assert sheet.shape[2] == 3 and sheet.shape[0] >= 2 * 24 and sheet.shape[1] >= 2 * 32
    rgb = reference.variant_records()["RGB"]
    render_report([rgb], out_dir=tmp_path, panels=panels)
    assert read_png(tmp_path / "flow_panels.png").shape == contact_sheet(panels).shape
    with pytest.raises(ValueError):
        render_report([])
