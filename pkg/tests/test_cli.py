import csv
import io
import json

import pytest

from flowseg import cli, reference
from flowseg.errors import ValidationError

TINY = """
[run]
seed = 11

[dataset]
source = synthetic
root = {root}
synth_cases = 3
synth_clips = 1
synth_frames = 6
synth_width = 40
synth_height = 32

[flow]
tile_size = 32
levels = 2
iterations = 10

[network]
depth = 1
base_width = 2

[train]
epochs = 1
batch_size = 2
crop_size = 16
samples_per_epoch = 2
repeats = {repeats}
variants = {variants}
"""


def write_config(tmp_path, repeats=1, variants="RGB, t1 XY", name="c.ini"):
    p = tmp_path / name
    p.write_text(TINY.format(root=tmp_path / "data", repeats=repeats, variants=variants))
    return p


def run(argv, capsys, env=None):
    code = cli.main(argv, env=env or {})
    out, err = capsys.readouterr()
    return code, out, err


def test_help_documents_flags(capsys):
    with pytest.raises(SystemExit):
        cli.main(["train", "--help"], env={})
    out = capsys.readouterr().out
    for flag in ("--config", "--seed", "--workers", "--variants", "--out"):
        assert flag in out
    assert "FLOWSEG_" in out


def test_config_resolution_order(tmp_path):
    p = write_config(tmp_path)
    cfg = cli.load_config(p, env={"FLOWSEG_TRAIN_EPOCHS": "7", "FLOWSEG_RUN_SEED": "3"},
                          overrides={("run", "seed"): 5})
    assert cfg["train"]["epochs"] == 7
    assert cfg["run"]["seed"] == 5
    assert [v.name for v in cfg["train"]["variants"]] == ["RGB", "t1 XY"]


@pytest.mark.parametrize("text", ["[train]\nepochz = 3\n", "[nonsense]\na = 1\n", "[train]\nepochs = many\n",
                                  "[flow]\noffsets = 1\n[train]\nvariants = t5 XY\n",
                                  "[augment]\nscale_min = 2\nscale_max = 1\n"])
def test_invalid_configs_exit_1(tmp_path, capsys, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    code, _, err = run(["report", "--config", str(p), "--out", str(tmp_path / "o")], capsys)
    assert code == 1 and "validation error" in err


def test_unknown_environment_key_rejected(tmp_path):
    with pytest.raises(ValidationError):
        cli.load_config(None, env={"FLOWSEG_TRAIN_EPOCHZ": "1"})
    with pytest.raises(ValidationError):
        cli.load_config(None, env={"FLOWSEG_BOGUS": "1"})


def test_missing_artifacts_exit_2(tmp_path, capsys):
    code, _, err = run(["flow", "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "prepare" in err
    code, _, _ = run(["report", "--config", str(tmp_path / "nope.ini")], capsys)
    assert code == 2


def test_internal_errors_exit_3(tmp_path, capsys, monkeypatch):
    def boom(cfg, out):
        raise RuntimeError("bug")
    monkeypatch.setitem(cli.COMMANDS, "report", (boom, "x"))
    code, _, err = run(["report", "--out", str(tmp_path)], capsys)
    assert code == 3 and "internal error" in err


def test_report_on_reference_fixtures(tmp_path, capsys):
    env = {"FLOWSEG_REPORT_SOURCE": "reference"}
    code, out, err = run(["report", "--out", str(tmp_path)], capsys, env)
    assert code == 0
    assert "Per-variant performance" in out and "Grouped means" in out
    assert "level=" not in out and "level=" in err
    produced = {r["variant"]: r for r in csv.DictReader(io.StringIO((tmp_path / "report/variants.csv").read_text()))}
    for name, rec in reference.variant_records().items():
        for col, value in rec.row().items():
            assert abs(float(produced[name][col]) - 100 * value) <= 0.01 + 1e-9
    groups = list(csv.DictReader(io.StringIO((tmp_path / "report/groups.csv").read_text())))
    assert [g["group"] for g in groups] == ["RGB", "OF", "t1", "t5", "RGBof", "XY", "PC"]
    assert "source = reference" in (tmp_path / "config.ini").read_text()


def test_prepare_reference_reproduces_table_i(tmp_path, capsys):
    env = {"FLOWSEG_DATASET_SOURCE": "reference"}
    code, out, _ = run(["prepare", "--out", str(tmp_path)], capsys, env)
    assert code == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert [stats[s]["total_frames"] for s in ("train", "validation", "test")] == [4720, 1760, 1600]
    assert [stats[s]["grasper_frames"] for s in ("train", "validation", "test")] == [3598, 1200, 1222]
    assert [stats[s]["lhook_frames"] for s in ("train", "validation", "test")] == [1369, 426, 459]
    assert "8080" in out


def _pipeline(cfg_path, out, capsys, steps=("prepare", "flow", "repr", "train", "eval", "report")):
    outputs = {}
    for step in steps:
        code, stdout, err = run([step, "--config", str(cfg_path), "--out", str(out)], capsys)
        assert code == 0, (step, err)
        outputs[step] = stdout
    return outputs


def test_end_to_end_is_idempotent_and_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, repeats=2)
    first = _pipeline(cfg, tmp_path / "a", capsys)
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert sum(s["total_frames"] for s in stats.values()) == 18
    again = _pipeline(cfg, tmp_path / "a", capsys, ("flow", "repr"))
    assert json.loads(again["flow"])["written"] == 0
    assert json.loads(again["repr"])["written"] == 0
    before = (tmp_path / "a/checkpoints/RGB_r0.fsn").stat().st_mtime_ns
    _pipeline(cfg, tmp_path / "a", capsys, ("train", "eval"))
    assert (tmp_path / "a/checkpoints/RGB_r0.fsn").stat().st_mtime_ns == before
    second = _pipeline(cfg, tmp_path / "b", capsys, ("prepare", "train", "eval", "report"))
    assert first["report"] == second["report"]
    assert (tmp_path / "a/report/runs.csv").read_bytes() == (tmp_path / "b/report/runs.csv").read_bytes()


def test_full_variant_matrix_counts(tmp_path, capsys):
    variants = ", ".join(v.name for v in cli.STANDARD_VARIANTS)
    cfg = write_config(tmp_path, repeats=4, variants=variants)
    _pipeline(cfg, tmp_path / "o", capsys)
    assert len(list((tmp_path / "o/checkpoints").glob("*.fsn"))) == 28
    assert len(list((tmp_path / "o/metrics").glob("*.json"))) == 28
    variants_csv = list(csv.DictReader(io.StringIO((tmp_path / "o/report/variants.csv").read_text())))
    groups_csv = list(csv.DictReader(io.StringIO((tmp_path / "o/report/groups.csv").read_text())))
    assert len(variants_csv) == 7 and len(groups_csv) == 7


def test_variants_flag_overrides(tmp_path, capsys):
    cfg = write_config(tmp_path)
    _pipeline(cfg, tmp_path / "o", capsys, ("prepare",))
    code, out, _ = run(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), "--variants", "RGB"], capsys)
    assert code == 0
    assert [p.name for p in (tmp_path / "o/checkpoints").glob("*.fsn")] == ["RGB_r0.fsn"]
    code, _, err = run(["eval", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "t1_XY_r0.fsn" in err
