import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowseg import flo
from flowseg.imaging import (FlowField, crop, crop_flow, endpoint_error, read_mask_png, read_png,
                             resize_bilinear, resize_nearest, sample_bilinear, to_luminance, warp_image,
                             write_mask_png, write_png)

from conftest import random_flow


def test_resize_same_size_is_identity(rng):
    img = rng.uniform(size=(7, 9, 3))
    out = resize_bilinear(img, 9, 7)
    assert np.array_equal(out, img)


def test_resize_2x2_to_4x4_half_pixel_centres():
    img = np.array([[0.0, 1.0], [0.0, 1.0]])
    out = resize_bilinear(img, 4, 4)
    # Output column i samples input x = (i + 0.5) / 2 - 0.5, clamped: 0, 0.25, 0.75, 1.
    expected = np.tile([0.0, 0.25, 0.75, 1.0], (4, 1))
    np.testing.assert_allclose(out, expected, atol=1e-15)


@pytest.mark.parametrize("size", [(1, 1), (3, 5), (13, 4), (40, 31)])
def test_resize_constant_stays_constant(size):
    img = np.full((6, 8), 0.37)
    out = resize_bilinear(img, *size)
    assert out.shape == (size[1], size[0])
    assert np.all(out == 0.37)


def test_resize_nearest_cases():
    m = np.array([[1, 2], [3, 0]])
    assert np.array_equal(resize_nearest(m, 2, 2), m)
    up = resize_nearest(m, 4, 4)
    assert np.array_equal(up, np.kron(m, np.ones((2, 2), dtype=int)))
    assert np.all(resize_nearest(np.full((9, 9), 2), 4, 3) == 2)


def test_crop_rects():
    img = np.arange(480 * 854).reshape(480, 854)
    assert np.array_equal(crop(img, 0, 0, 854, 480), img)
    left = crop(img, 0, 0, 480, 480)
    right = crop(img, 854 - 480, 0, 480, 480)
    assert left.shape == right.shape == (480, 480)
    assert right[0, 0] == img[0, 374]
    with pytest.raises(ValueError):
        crop(img, 400, 0, 480, 480)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 3), st.integers(0, 3))
def test_crop_composes(x1, y1, x2, y2):
    img = np.arange(20 * 24).reshape(20, 24)
    inner = crop(crop(img, x1, y1, 12, 10), x2, y2, 6, 5)
    assert np.array_equal(inner, crop(img, x1 + x2, y1 + y2, 6, 5))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 6), elements=st.floats(-3, 3)), st.integers(1, 20), st.integers(1, 20))
def test_resize_stays_within_input_range(img, w, h):
    out = resize_bilinear(img, w, h)
    assert out.min() >= img.min() and out.max() <= img.max()


def test_flo_unit_field_is_20_bytes():
    data = flo.write_flo(FlowField.zeros(1, 1))
    assert len(data) == 20
    assert data[:4] == b"PIEH"
    f = flo.read_flo(data)
    assert f.shape == (1, 1) and f.u[0, 0] == 0 and f.v[0, 0] == 0


def test_flo_round_trip_bit_identical(rng):
    f = random_flow(rng)
    f32 = FlowField(f.u.astype(np.float32), f.v.astype(np.float32))
    g = flo.read_flo(flo.write_flo(f32))
    assert g.u.tobytes() == f32.u.tobytes() and g.v.tobytes() == f32.v.tobytes()
    assert flo.write_flo(g) == flo.write_flo(f32)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(2)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_flo_round_trip_property(planes):
    f = FlowField.from_array(planes)
    g = flo.read_flo(flo.write_flo(f))
    assert np.array_equal(g.to_array().astype(np.float32), planes)


def test_flo_rejects_bad_input():
    good = flo.write_flo(FlowField.constant(2, 3, 1.0, -1.0))
    with pytest.raises(ValueError):
        flo.read_flo(b"XXXX" + good[4:])
    with pytest.raises(ValueError):
        flo.read_flo(good[:-4])
    with pytest.raises(ValueError):
        flo.read_flo(good + b"\0\0\0\0")
    with pytest.raises(ValueError):
        flo.write_flo(FlowField.constant(1, 1, np.nan, 0.0))


def test_flo_file_round_trip(tmp_path, rng):
    f = random_flow(rng)
    flo.save_flo(tmp_path / "a.flo", f)
    g = flo.load_flo(tmp_path / "a.flo")
    np.testing.assert_array_equal(g.u, f.u.astype(np.float32))


def test_png_round_trips(tmp_path, rng):
    img = np.round(rng.uniform(size=(5, 7, 3)) * 255) / 255
    write_png(tmp_path / "i.png", img)
    np.testing.assert_allclose(read_png(tmp_path / "i.png"), img, atol=1e-12)
    m = rng.integers(0, 3, size=(5, 7))
    write_mask_png(tmp_path / "m.png", m)
    assert np.array_equal(read_mask_png(tmp_path / "m.png"), m)


def test_luminance_weights():
    px = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
    np.testing.assert_allclose(to_luminance(px), [[0.299, 0.587, 0.114]])


def test_warp_by_integer_shift():
    img = np.arange(30, dtype=float).reshape(5, 6)
    out = warp_image(img, FlowField.constant(5, 6, 1.0, 0.0))
    np.testing.assert_array_equal(out[:, :-1], img[:, 1:])
    np.testing.assert_array_equal(out[:, -1], img[:, -1])


def test_sample_bilinear_fill_outside():
    plane = np.ones((3, 3))
    out = sample_bilinear(plane, np.array([-2.0, 1.0]), np.array([1.0, 1.0]), fill=0.0)
    assert out[0] == 0.0 and out[1] == 1.0


def test_flowfield_basics(rng):
    f = random_flow(rng)
    assert endpoint_error(f, f) == 0.0
    assert endpoint_error(f, -(-f)) == 0.0
    g = f + FlowField.constant(*f.shape, 3.0, 4.0)
    assert endpoint_error(g, f) == pytest.approx(5.0)
    assert crop_flow(f, 1, 2, 4, 3).shape == (3, 4)
    with pytest.raises(ValueError):
        f.u[0, 0] = 1.0
