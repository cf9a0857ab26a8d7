"""Weak-perspective lifting and the space-time vector."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tritrack.camera import (DEFAULT_FOCAL, KEYPOINT_DIM, NUM_JOINTS,
                             TIME_DIM, CameraCrop, build_spacetime,
                             lift_translation, place_keypoints,
                             temporal_encode)
from tritrack.errors import DegenerateCameraError, DimensionError

from .oracles import reference_lift, reference_temporal


def crop(**kw):
    base = dict(image_w=1920.0, image_h=1080.0, center_x=960.0,
                center_y=540.0, box_size=200.0, cam_scale=1.0,
                cam_tx=0.0, cam_ty=0.0, focal=DEFAULT_FOCAL)
    base.update(kw)
    return CameraCrop(**base)


def test_centered_crop_lifts_to_unit_depth():
    c = crop(image_w=1000, image_h=1000, center_x=500, center_y=500,
             box_size=2000, focal=1000)
    assert np.array_equal(lift_translation(c), [0.0, 0.0, 1.0])


def test_hand_derived_lift_case():
    c = CameraCrop(image_w=1920, image_h=1080, center_x=1060, center_y=640,
                   box_size=200, cam_scale=0.5, cam_tx=0.1, cam_ty=-0.2,
                   focal=1000)
    t = lift_translation(c)
    assert np.allclose(t, [2.1, 1.8, 20.0], rtol=0, atol=1e-12)


def test_doubling_focal_doubles_depth_only():
    a = lift_translation(crop(focal=1000))
    b = lift_translation(crop(focal=2000))
    assert a[0] == b[0] and a[1] == b[1]
    assert b[2] == 2.0 * a[2]


def test_lift_matches_scalar_reference():
    rng = np.random.default_rng(8)
    for _ in range(50):
        params = dict(image_w=rng.uniform(100, 4000),
                      image_h=rng.uniform(100, 4000),
                      center_x=rng.uniform(-500, 4000),
                      center_y=rng.uniform(-500, 4000),
                      box_size=rng.uniform(1, 3000),
                      cam_scale=rng.uniform(0.1, 3.0),
                      cam_tx=rng.uniform(-5, 5), cam_ty=rng.uniform(-5, 5),
                      focal=rng.uniform(100, 10000))
        got = lift_translation(CameraCrop(**params))
        want = reference_lift(params["image_w"], params["image_h"],
                              params["center_x"], params["center_y"],
                              params["box_size"], params["cam_scale"],
                              params["cam_tx"], params["cam_ty"],
                              params["focal"])
        assert np.allclose(got, want, rtol=0, atol=0)


def test_scale_box_tradeoff_leaves_lift_unchanged():
    rng = np.random.default_rng(5)
    base = crop(center_x=1060, center_y=640, box_size=200, cam_tx=0.3)
    ref = lift_translation(base)
    for _ in range(100):
        k = float(rng.uniform(0.01, 100.0))
        scaled = crop(center_x=1060, center_y=640, cam_tx=0.3,
                      cam_scale=base.cam_scale / k, box_size=base.box_size * k)
        assert np.allclose(lift_translation(scaled), ref, rtol=1e-12, atol=0)


def test_degenerate_product_raises_not_inf():
    c = crop(cam_scale=1e-200, box_size=1e-200)
    with pytest.raises(DegenerateCameraError):
        lift_translation(c)


def test_crop_invariants_enforced():
    with pytest.raises(DimensionError):
        crop(box_size=0.0)
    with pytest.raises(DimensionError):
        crop(cam_scale=-1.0)
    with pytest.raises(DimensionError):
        crop(focal=np.inf)


def test_crop_array_round_trip():
    c = crop(center_x=333.25, cam_tx=-0.125)
    back = CameraCrop.from_array(c.as_array())
    assert back == c


def test_place_keypoints_examples():
    kps = np.zeros((NUM_JOINTS, 3))
    assert np.array_equal(place_keypoints(kps, [0, 0, 0]), kps)
    placed = place_keypoints(kps, [2.1, 1.8, 20.0])
    assert np.all(placed == np.array([2.1, 1.8, 20.0]))
    kps[0] = [1, 2, 3]
    assert np.array_equal(place_keypoints(kps, [0.5, 0.5, 0.5])[0],
                          [1.5, 2.5, 3.5])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_place_keypoints_translation_composes(seed):
    rng = np.random.default_rng(seed)
    kps = rng.normal(size=(NUM_JOINTS, 3))
    t1 = rng.normal(size=3)
    t2 = rng.normal(size=3)
    once = place_keypoints(kps, t1 + t2)
    twice = place_keypoints(place_keypoints(kps, t1), t2)
    assert np.allclose(once, twice, rtol=0, atol=1e-12)


def test_temporal_encode_frame_zero_pattern():
    v = temporal_encode(0)
    assert v.shape == (TIME_DIM,)
    assert np.array_equal(v[0::2], np.zeros(23))
    assert np.array_equal(v[1::2], np.ones(22))


def test_temporal_encode_matches_scalar_reference():
    # numpy and libm round sin/cos of large angles slightly differently,
    # hence the tiny absolute tolerance
    for frame in (0, 1, 2, 7, 100, 999, 5000):
        assert np.allclose(temporal_encode(frame), reference_temporal(frame),
                           rtol=0, atol=1e-12)


def test_temporal_encode_first_and_last_index():
    v = temporal_encode(1)
    assert v[0] == pytest.approx(np.sin(1.0), abs=1e-15)
    # 45 is odd: index 44 is even and takes the sin branch at the top rate
    assert v[44] == pytest.approx(np.sin(1.0 / 10000.0 ** (44.0 / 45.0)),
                                  abs=1e-15)


def test_temporal_encode_distinguishes_small_frames():
    assert not np.array_equal(temporal_encode(0), temporal_encode(1))


def test_build_spacetime_layout():
    kps = np.zeros((NUM_JOINTS, 3))
    v = build_spacetime(kps, 0)
    assert v.shape == (90,)
    assert np.array_equal(v[:KEYPOINT_DIM], np.zeros(KEYPOINT_DIM))
    assert np.array_equal(v[KEYPOINT_DIM:], temporal_encode(0))

    ones = build_spacetime(np.ones((NUM_JOINTS, 3)), 0, z_norm=1.0)
    assert np.array_equal(ones[:KEYPOINT_DIM], np.ones(KEYPOINT_DIM))


def test_build_spacetime_scales_keypoints():
    kps = np.zeros((NUM_JOINTS, 3))
    kps[0] = [2.1, 1.8, 20.0]
    v = build_spacetime(kps, 5, z_norm=10.0)
    assert np.allclose(v[0:3], [0.21, 0.18, 2.0], rtol=0, atol=1e-15)
    assert np.array_equal(v[45:], temporal_encode(5))


def test_keypoint_shape_validated():
    with pytest.raises(DimensionError):
        build_spacetime(np.zeros((14, 3)), 0)
    with pytest.raises(DimensionError):
        place_keypoints(np.zeros((NUM_JOINTS, 2)), [0, 0, 0])
