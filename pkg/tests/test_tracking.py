import numpy as np
import pytest

from proxyvid import synth
from proxyvid.exceptions import FrameRangeError, TrackingError
from proxyvid.tracking import (LKTracker, OracleTracker, PrecomputedTracker, TrackerQuery, make_tracker,
                               track)
from proxyvid.video import FrameSequence


def smooth_texture(x, y, seed=0):
    """Band-limited texture: a fixed sum of sinusoids, so sub-pixel shifts are exact."""
    rng = np.random.default_rng(seed)
    out = np.zeros_like(x, dtype=np.float64)
    for _ in range(12):
        fx, fy = rng.uniform(-0.35, 0.35, 2)
        out += rng.uniform(0.2, 1.0) * np.sin(fx * x + fy * y + rng.uniform(0, 2 * np.pi))
    return 0.5 + out / 14.0


def shifted_video(shifts, size=64, seed=0):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    frames = []
    for dx, dy in shifts:
        g = smooth_texture(xx - dx, yy - dy, seed)
        frames.append(np.repeat(g[..., None], 3, axis=2))
    return FrameSequence(np.clip(np.array(frames), 0, 1)).single_layer()


INTERIOR = np.array([[20.0, 20.0], [32.0, 30.0], [40.5, 25.25], [28.0, 42.0], [44.0, 44.0]])


def test_identity_query_returns_input():
    video = shifted_video([(0, 0), (3, 0)])
    pts = np.array([[1.5, 2.5], [10.0, 11.0]])
    for trk in (LKTracker(), OracleTracker(motion=object())):
        res = trk.track(TrackerQuery(1, 1, pts), video)
        assert np.array_equal(res.points, pts)
        assert np.all(res.confidence == 1.0)


def test_frame_range_and_finite_checks():
    video = shifted_video([(0, 0), (1, 0)])
    with pytest.raises(FrameRangeError):
        LKTracker().track(TrackerQuery(0, 2, [[1.0, 1.0]]), video)
    with pytest.raises(FrameRangeError):
        LKTracker().track(TrackerQuery(-1, 0, [[1.0, 1.0]]), video)
    with pytest.raises(TrackingError):
        LKTracker().track(TrackerQuery(0, 1, [[np.nan, 1.0]]), video)
    with pytest.raises(TrackingError, match="analytic motion"):
        OracleTracker().track(TrackerQuery(0, 1, [[1.0, 1.0]]), video)


def test_lk_integer_shift():
    video = shifted_video([(0, 0), (5, 0)])
    res = LKTracker().track(TrackerQuery(0, 1, INTERIOR), video)
    err = np.hypot(*(res.points - INTERIOR - [5, 0]).T)
    assert err.max() < 0.5


def test_lk_subpixel_shift():
    video = shifted_video([(0, 0), (3.25, -1.5)])
    res = LKTracker().track(TrackerQuery(0, 1, INTERIOR), video)
    err = np.hypot(*(res.points - INTERIOR - [3.25, -1.5]).T)
    assert err.max() < 0.25
    assert np.all(res.confidence > 0.5)


def test_lk_zero_motion_and_round_trip():
    video = shifted_video([(0, 0), (0, 0), (2.5, 1.0)])
    res = LKTracker().track(TrackerQuery(0, 1, INTERIOR), video)
    assert np.hypot(*(res.points - INTERIOR).T).max() < 0.05
    fwd = LKTracker().track(TrackerQuery(0, 2, INTERIOR), video)
    back = LKTracker().track(TrackerQuery(2, 0, fwd.points), video)
    assert np.hypot(*(back.points - INTERIOR).T).max() < 0.25


def test_lk_flat_region_low_confidence():
    frames = np.full((2, 48, 48, 3), 0.4)
    video = FrameSequence(frames).single_layer()
    res = LKTracker().track(TrackerQuery(0, 1, [[24.0, 24.0]]), video)
    assert res.confidence[0] < 0.1


def test_lk_rejects_even_window():
    with pytest.raises(ValueError):
        LKTracker(window=14)


def scene_with_square():
    spec = synth.SceneSpec(
        height=48, width=48, n_frames=5, seed=3,
        background_motion=synth.MotionSpec(velocity=[0.5, 0.0], angular_velocity=0.01),
        layers=[synth.LayerSpec(shape="rectangle", size=[10.0, 10.0],
                                motion=synth.MotionSpec(center=[10.0, 24.0], velocity=[4.0, 0.0]))])
    return synth.generate(spec)


def test_oracle_matches_affine_model_and_round_trips():
    sv = scene_with_square()
    m = sv.spec.background_motion
    pts = np.array([[3.0, 5.0], [40.0, 7.0], [30.0, 40.0]])
    res = OracleTracker().track(TrackerQuery(0, 3, pts, layer=0), sv.video)
    # background: translation 0.5 px/frame plus rotation 0.01 rad/frame about its centre
    theta = 3 * m.angular_velocity
    c = np.cos(theta), np.sin(theta)
    rot = np.array([[c[0], -c[1]], [c[1], c[0]]])
    expected = pts @ rot.T + [1.5, 0.0]
    assert np.allclose(res.points, expected, atol=1e-9)
    back = OracleTracker().track(TrackerQuery(3, 0, res.points, layer=0), sv.video)
    assert np.allclose(back.points, pts, atol=1e-9)


def test_oracle_occlusion_confidence_and_front_layer():
    sv = scene_with_square()
    # background point the square passes over at t=2 (centre x=18)
    res = OracleTracker().track(TrackerQuery(0, 2, [[18.0, 24.0]], layer=0), sv.video)
    bg = res.points[0]
    assert sv.motion.covers(1, 2, bg[None])[0]
    assert res.confidence[0] == 0.0
    # without a layer hint the front layer is used: the square moves 4 px/frame
    res = track(TrackerQuery(0, 1, [[10.0, 24.0]]), sv.video)
    assert np.allclose(res.points, [[14.0, 24.0]])
    assert res.confidence[0] == 1.0


def test_precomputed_tracker_replays_and_falls_back():
    pos = np.array([[[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]],
                    [[5.0, 5.0], [5.0, 6.0], [5.0, 7.0]]])
    conf = np.array([[1.0, 1.0, 0.5], [1.0, 0.0, 1.0]])
    video = FrameSequence(np.zeros((3, 10, 10, 3))).single_layer()
    trk = PrecomputedTracker([(0, 0, pos, conf)])
    res = trk.track(TrackerQuery(0, 2, [[5.0, 5.0], [1.0, 1.0]]), video)
    assert np.array_equal(res.points, [[5.0, 7.0], [3.0, 1.0]])
    assert np.array_equal(res.confidence, [1.0, 0.5])
    with pytest.raises(TrackingError, match="no stored trajectory"):
        trk.track(TrackerQuery(0, 1, [[9.0, 9.0]]), video)

    class Const:
        def track(self, q, v):
            from proxyvid.tracking import TrackerResult
            return TrackerResult(q.points + 1.0, np.full(len(q.points), 0.7))

    res = PrecomputedTracker([(0, 0, pos, conf)], fallback=Const()).track(
        TrackerQuery(0, 1, [[9.0, 9.0], [1.0, 1.0]]), video)
    assert np.array_equal(res.points, [[10.0, 10.0], [2.0, 1.0]])
    assert np.array_equal(res.confidence, [0.7, 1.0])


def test_make_tracker():
    assert isinstance(make_tracker("oracle"), OracleTracker)
    assert isinstance(make_tracker("LK", window=9), LKTracker)
    with pytest.raises(ValueError):
        make_tracker("cotracker")
