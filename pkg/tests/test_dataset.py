import hashlib

import numpy as np
import pytest

from flowseg import reference
from flowseg.dataset import (CHOLECSEG8K_INDEXED, CHOLECSEG8K_WATERSHED, IDENTITY, CaseSplit, ClassMap,
                             DatasetManifest, FrameRecord, SynthParams, build_manifest, class_balance_stats,
                             manifest_from_counts, remap_mask, render_clip, split_by_cases, split_stats,
                             synth_dataset)
from flowseg.errors import MissingArtifactError, ValidationError
from flowseg.imaging import read_mask_png

# Published per-subset balance: subset -> (frames, grasper, lhook, % of dataset)
TABLE_I = {
    "train": (4720, 3598, 1369, 58.42),
    "validation": (1760, 1200, 426, 21.78),
    "test": (1600, 1222, 459, 19.80),
}


@pytest.fixture(scope="module")
def reference_manifest():
    return manifest_from_counts(reference.case_counts())


@pytest.fixture(scope="module")
def reference_split():
    return CaseSplit.from_mapping(reference.reference_split())


def test_remap_cases():
    assert not remap_mask(np.full((3, 3), 50), CHOLECSEG8K_WATERSHED).any()
    raw = np.array([[50, 31], [32, 11]])
    assert set(np.unique(remap_mask(raw, CHOLECSEG8K_WATERSHED))) == {0, 1, 2}
    assert remap_mask(np.array([[5, 9, 0]]), CHOLECSEG8K_INDEXED).tolist() == [[1, 2, 0]]
    with pytest.raises(ValidationError, match="label 77"):
        remap_mask(np.array([[50, 77]]), CHOLECSEG8K_WATERSHED)


def test_class_map_validation():
    with pytest.raises(ValidationError):
        ClassMap({0: 0, 1: 1})
    with pytest.raises(ValidationError):
        ClassMap({0: 0, 1: 1, 2: 2, 3: 1})


def test_table_i_reproduced(reference_manifest, reference_split):
    stats = split_stats(reference_manifest, reference_split)
    published = reference.subset_stats()
    for name, (frames, g, lh, pct) in TABLE_I.items():
        s = stats[name]
        assert (s["total_frames"], s["grasper_frames"], s["lhook_frames"]) == (frames, g, lh)
        assert abs(s["dataset_pct"] - pct) <= 0.5
        assert abs(round(s["grasper_pct"]) - published[name]["grasper_pct"]) <= 0.5
        assert abs(round(s["lhook_pct"]) - published[name]["lhook_pct"]) <= 0.5
    assert stats["test"]["dataset_pct"] == pytest.approx(19.80, abs=0.005)


def test_whole_dataset_totals(reference_manifest):
    s = class_balance_stats(reference_manifest)
    assert (s["total_frames"], s["grasper_frames"], s["lhook_frames"]) == (8080, 6020, 2254)


def test_case_contributions(reference_manifest, reference_split):
    train, _, test = split_by_cases(reference_manifest, reference_split)
    case1 = train.subset([1])
    assert len(case1) == 1280
    assert sum(f.grasper for f in case1.frames) == 849
    assert sum(f.lhook for f in case1.frames) == 806
    assert len(test.subset([9])) == 240


def test_split_errors(reference_manifest, reference_split):
    with pytest.raises(ValidationError):
        split_by_cases(reference_manifest, CaseSplit(reference_split.train, (), reference_split.test))
    with pytest.raises(ValidationError):
        split_by_cases(reference_manifest, CaseSplit((1,), (1,), (9,)))
    with pytest.raises(ValidationError):
        split_by_cases(reference_manifest, CaseSplit((1, 999), (12,), (9,)))


def test_manifest_ordering_and_round_trip(tmp_path, reference_manifest):
    reference_manifest.check_ordering()
    path = tmp_path / "m.jsonl"
    reference_manifest.save(path)
    back = DatasetManifest.load(path)
    assert back.frames == reference_manifest.frames
    gap = DatasetManifest((FrameRecord(1, 0, 0, "", "", False, False), FrameRecord(1, 0, 2, "", "", False, False)))
    with pytest.raises(ValidationError):
        gap.check_ordering()


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.png")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_synthetic_dataset_layout_and_determinism(tmp_path):
    params = SynthParams(cases=2, clips_per_case=2, frames_per_clip=10, width=64, height=48)
    a = synth_dataset(tmp_path / "a", 5, params)
    b = synth_dataset(tmp_path / "b", 5, params)
    assert _digest(a) == _digest(b)
    images = sorted(a.rglob("frame_*_endo.png"))
    masks = sorted(a.rglob("frame_*_endo_watershed_mask.png"))
    assert len(images) == len(masks) == 40
    for m in masks[:10]:
        assert set(np.unique(remap_mask(read_mask_png(m), IDENTITY))) <= {0, 1, 2}
    manifest = build_manifest(a, IDENTITY, workers=2)
    assert len(manifest) == 40 and manifest.cases == [1, 2]
    assert (a / manifest.frames[0].image).exists()


def test_fast_tool_moves_faster_and_is_rarer():
    params = SynthParams(p_grasper=1.0, p_lhook=1.0, width=96, height=64, frames_per_clip=6)
    _, masks = render_clip(3, params)

    def centroid(m, c):
        ys, xs = np.nonzero(m == c)
        return np.array([xs.mean(), ys.mean()])

    speeds = {c: np.mean([np.linalg.norm(centroid(masks[i + 1], c) - centroid(masks[i], c))
                          for i in range(len(masks) - 1)]) for c in (1, 2)}
    assert speeds[2] > 2 * speeds[1]
    assert SynthParams().p_lhook < SynthParams().p_grasper
    with pytest.raises(ValidationError):
        SynthParams(slow_speed=1.0, fast_speed=2.0)


def test_missing_mask_names_the_frame(tmp_path):
    root = synth_dataset(tmp_path, 0, SynthParams(cases=1, clips_per_case=1, frames_per_clip=2,
                                                 width=32, height=32))
    victim = next(root.rglob("frame_1_endo_watershed_mask.png"))
    victim.unlink()
    with pytest.raises(MissingArtifactError, match="frame_1_endo.png"):
        build_manifest(root, IDENTITY)
