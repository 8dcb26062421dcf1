import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowseg.augment import (AugmentConfig, ElasticSpec, GeomTransform, apply_to_flow, apply_to_image,
                             apply_to_mask, augment_sample, sample_transform)
from flowseg.encodings import EncodingKind
from flowseg.flow import PyramidConfig, estimate_flow
from flowseg.imaging import FlowField, endpoint_error
from flowseg.synthetic import translated_pair

from conftest import random_flow

ROT90 = np.pi / 2


def test_disabled_config_gives_identity():
    for seed in range(20):
        assert sample_transform(seed, AugmentConfig.disabled()).is_identity


def test_sampling_is_deterministic():
    assert sample_transform(42) == sample_transform(42)


def test_sampled_rotations_within_range():
    cfg = AugmentConfig(p_rotation=1.0)
    rots = np.array([sample_transform(s, cfg).rotation for s in range(10_000)])
    assert np.all(np.abs(rots) <= np.pi / 6)
    assert rots.min() < -0.5 and rots.max() > 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(scale_range=(1.4, 0.7))
    with pytest.raises(ValueError):
        AugmentConfig(p_hflip=1.5)
    with pytest.raises(ValueError):
        GeomTransform(scale=0.0)


def test_identity_transform_leaves_everything(rng):
    img = rng.uniform(size=(8, 9, 3))
    mask = rng.integers(0, 3, size=(8, 9))
    f = random_flow(rng, 8, 9)
    t = GeomTransform()
    assert np.array_equal(apply_to_image(t, img), img)
    assert np.array_equal(apply_to_mask(t, mask), mask)
    assert apply_to_flow(t, f) is f


@pytest.mark.parametrize("t", [GeomTransform(hflip=True), GeomTransform(vflip=True)])
def test_flips_are_involutions(rng, t):
    img = rng.uniform(size=(7, 10, 3))
    mask = rng.integers(0, 3, size=(7, 10))
    f = random_flow(rng, 7, 10)
    assert np.array_equal(apply_to_image(t, apply_to_image(t, img)), img)
    assert np.array_equal(apply_to_mask(t, apply_to_mask(t, mask)), mask)
    g = apply_to_flow(t, apply_to_flow(t, f))
    assert np.array_equal(g.u, f.u) and np.array_equal(g.v, f.v)


def test_hflip_matches_array_flip(rng):
    img = rng.uniform(size=(5, 6))
    assert np.array_equal(apply_to_image(GeomTransform(hflip=True), img), img[:, ::-1])
    assert np.array_equal(apply_to_image(GeomTransform(vflip=True), img), img[::-1])


def test_four_quarter_turns_are_exact(rng):
    img = rng.uniform(size=(9, 9, 3))
    mask = rng.integers(0, 3, size=(9, 9))
    f = random_flow(rng, 9, 9)
    t = GeomTransform(rotation=ROT90)
    a, m, g = img, mask, f
    for _ in range(4):
        a, m, g = apply_to_image(t, a), apply_to_mask(t, m), apply_to_flow(t, g)
    assert np.array_equal(a, img) and np.array_equal(m, mask)
    assert np.array_equal(g.u, f.u) and np.array_equal(g.v, f.v)


def test_quarter_turn_is_counter_clockwise_on_screen():
    img = np.zeros((5, 5))
    img[2, 4] = 1.0  # right of centre
    out = apply_to_image(GeomTransform(rotation=ROT90), img)
    assert out[0, 2] == 1.0  # now above centre


def test_flow_vectors_transform_with_the_grid():
    f = FlowField.constant(6, 6, 2.0, 1.0)
    g = apply_to_flow(GeomTransform(hflip=True), f)
    assert np.all(g.u == -2.0) and np.all(g.v == 1.0)
    g = apply_to_flow(GeomTransform(rotation=ROT90), f)
    # R(90) = [[0, 1], [-1, 0]] in (x, y-down) coordinates
    assert np.all(g.u == 1.0) and np.all(g.v == -2.0)
    g = apply_to_flow(GeomTransform(scale=2.0), FlowField.constant(8, 8, 1.0, 0.0))
    inner = (slice(3, 5), slice(3, 5))
    assert np.all(g.u[inner] == 2.0) and np.all(g.v[inner] == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_masks_never_gain_labels(seed):
    rng = np.random.default_rng(seed)
    mask = rng.choice([0, 2], size=(12, 12))
    t = sample_transform(seed, AugmentConfig(p_rotation=1, p_scale=1, p_elastic=0.5))
    out = apply_to_mask(t, mask)
    assert set(np.unique(out)) <= {0, 2}


@pytest.mark.parametrize("t", [
    GeomTransform(hflip=True),
    GeomTransform(vflip=True),
    GeomTransform(rotation=ROT90),
    GeomTransform(rotation=-ROT90, hflip=True),
    GeomTransform(scale=1.25),
    GeomTransform(scale=0.85),
    GeomTransform(rotation=0.2),
])
def test_flow_consistency_oracle(texture, t):
    a, b, _ = translated_pair(texture, 96, 96, 1.5, -1.0)
    cfg = PyramidConfig(levels=3)
    direct = estimate_flow(apply_to_image(t, a), apply_to_image(t, b), cfg)
    mapped = apply_to_flow(t, estimate_flow(a, b, cfg))
    assert endpoint_error(direct, mapped, border=16) < 0.5


def test_elastic_is_deterministic_and_flagged(rng):
    t = GeomTransform(elastic=ElasticSpec(8.0, 6.0, seed=3))
    img = rng.uniform(size=(16, 16, 3))
    assert np.array_equal(apply_to_image(t, img), apply_to_image(t, img))
    f = random_flow(rng, 16, 16)
    s = augment_sample(t, img, np.zeros((16, 16), int), f, EncodingKind.PC)
    assert s.flow_approximate and s.flow_planes.planes.shape == (16, 16, 2)
    s = augment_sample(t, img, np.zeros((16, 16), int), f, EncodingKind.XY, elastic_on_flow=False)
    assert not s.flow_approximate
    # without the elastic part the flow only sees the (identity) affine part
    assert np.array_equal(s.flow_planes.planes[..., 0], f.u)


def test_augment_sample_encodes_after_transform():
    f = FlowField.constant(6, 6, 1.0, 0.0)
    s = augment_sample(GeomTransform(hflip=True), np.zeros((6, 6, 3)), np.zeros((6, 6), int), f,
                       EncodingKind.XY)
    assert np.all(s.flow_planes.planes[..., 0] == -1.0)
