import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowseg.flow import rescale_flow
from flowseg.imaging import FlowField, crop_flow
from flowseg.tiling import Blend, plan_tiles, restore_source, stitch, tile_images, tiled_flow


def test_plan_854x480():
    p = plan_tiles(854, 480, 256)
    assert p.left == (0, 0, 480, 480)
    assert p.right == (374, 0, 480, 480)
    assert p.stitched == (456, 256)
    assert p.right_offset == 199
    assert p.blend is Blend.LINEAR_FEATHER


def test_plan_square_and_exact_halves():
    p = plan_tiles(480, 480, 256)
    assert p.left == p.right == (0, 0, 480, 480)
    assert p.stitched == (256, 256) and p.right_offset == 0
    p = plan_tiles(512, 256, 256)
    assert p.left == (0, 0, 256, 256) and p.right == (256, 0, 256, 256)
    assert p.overlap == 0 and p.stitched == (512, 256)


def test_plan_rejects_portrait():
    with pytest.raises(ValueError):
        plan_tiles(100, 200)


@pytest.mark.parametrize("blend", list(Blend))
def test_stitch_equal_tiles_is_exact(blend):
    p = plan_tiles(854, 480, 256, blend)
    tile = FlowField.constant(256, 256, 1.0, 0.0)
    out = stitch(tile, tile, p)
    assert out.shape == (256, 456)
    assert np.all(out.u == 1.0) and np.all(out.v == 0.0)


def test_stitch_average_arithmetic():
    p = plan_tiles(854, 480, 256, Blend.AVERAGE)
    out = stitch(FlowField.constant(256, 256, 1.0, 0.0), FlowField.constant(256, 256, 3.0, 0.0), p)
    assert np.all(out.u[:, :199] == 1.0)
    assert np.all(out.u[:, 199:256] == 2.0)
    assert np.all(out.u[:, 256:] == 3.0)


def test_feather_ramps_monotonically():
    p = plan_tiles(854, 480, 256)
    out = stitch(FlowField.constant(256, 256, 0.0, 0.0), FlowField.constant(256, 256, 1.0, 0.0), p)
    row = out.u[0]
    assert np.all(np.diff(row) >= 0)
    assert row[0] == 0.0 and row[-1] == 1.0


def _tile_field(gt, rect, t):
    return rescale_flow(crop_flow(gt, *rect), t, t)


@settings(max_examples=25, deadline=None)
@given(st.floats(-8, 8), st.floats(-8, 8), st.sampled_from(list(Blend)))
def test_constant_field_composition(u, v, blend):
    p = plan_tiles(854, 480, 256, blend)
    gt = FlowField.constant(480, 854, u, v)
    stitched = stitch(_tile_field(gt, p.left, 256), _tile_field(gt, p.right, 256), p)
    back = restore_source(stitched, p)
    assert back.shape == (480, 854)
    assert np.abs(back.u - u).max() < 1e-4 and np.abs(back.v - v).max() < 1e-4


def test_naive_rescale_is_biased_on_u():
    p = plan_tiles(854, 480, 256)
    gt = FlowField.constant(480, 854, 1.0, 1.0)
    stitched = stitch(_tile_field(gt, p.left, 256), _tile_field(gt, p.right, 256), p)
    naive = rescale_flow(stitched, 854, 480)
    # 456 stitched columns stand for 456 * 480 / 256 = 855 source columns, not 854.
    assert abs(naive.u.mean() - 854 / 855) < 1e-9
    assert np.abs(restore_source(stitched, p).u - 1.0).max() < 1e-12


def test_tiled_flow_with_stub_estimator(rng):
    p = plan_tiles(120, 64, 32)
    a = rng.uniform(size=(64, 120, 3))
    calls = []

    def est(x, y):
        calls.append(x.shape)
        return FlowField.constant(32, 32, 0.5, -0.5)

    out = restore_source(tiled_flow(a, a, p, est), p)
    assert calls == [(32, 32, 3), (32, 32, 3)]
    np.testing.assert_allclose(out.u, 0.5 * 64 / 32)
    left, right = tile_images(a, p)
    assert left.shape == right.shape == (32, 32, 3)
