"""
Point trackers behind a common interface.

``OracleTracker`` evaluates a synthetic scene's analytic motion; ``LKTracker``
is a pyramidal Lucas-Kanade tracker for real frames; ``PrecomputedTracker``
replays trajectories loaded from a ``.pvt`` file.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import FrameRangeError, TrackingError
from .vectorizer import to_gray

__all__ = [
    "TrackerQuery",
    "TrackerResult",
    "Tracker",
    "OracleTracker",
    "LKTracker",
    "PrecomputedTracker",
    "track",
    "make_tracker",
]


@dataclass
class TrackerQuery:
    source_frame: int
    target_frame: int
    points: np.ndarray
    layer: int | None = None  # owning layer, when the caller knows it

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)


@dataclass
class TrackerResult:
    points: np.ndarray
    confidence: np.ndarray


def _check_query(query, video):
    n = video.n_frames
    for t in (query.source_frame, query.target_frame):
        if not 0 <= t < n:
            raise FrameRangeError(f"frame {t} out of range [0, {n - 1}]")
    if not np.all(np.isfinite(query.points)):
        raise TrackingError("query points must be finite")


class Tracker(abc.ABC):
    """Maps points from one frame to another."""

    def track(self, query, video):
        _check_query(query, video)
        if query.source_frame == query.target_frame:
            return TrackerResult(query.points.copy(), np.ones(len(query.points)))
        return self._track(query, video)

    @abc.abstractmethod
    def _track(self, query, video):
        ...


class OracleTracker(Tracker):
    """Exact tracker for scenes that carry a :class:`~proxyvid.synth.SceneMotion`."""

    def __init__(self, motion=None):
        self.motion = motion

    def _track(self, query, video):
        motion = self.motion if self.motion is not None else getattr(video, "motion", None)
        if motion is None:
            raise TrackingError("oracle tracker needs a video with an analytic motion model")
        pts = query.points
        if query.layer is None:
            layers = motion.front_layer(query.source_frame, pts)
            if np.any(layers < 0):
                raise TrackingError("point not inside any layer at the source frame")
        else:
            layers = np.full(len(pts), int(query.layer))
        out = np.empty_like(pts)
        conf = np.empty(len(pts))
        for layer in np.unique(layers):
            sel = layers == layer
            out[sel] = motion.map_points(int(layer), query.source_frame, query.target_frame, pts[sel])
            conf[sel] = motion.visible(int(layer), query.target_frame, out[sel]).astype(np.float64)
        return TrackerResult(out, conf)


def _pyramid(gray, levels):
    pyr = [gray]
    for _ in range(1, levels):
        blurred = ndimage.gaussian_filter(pyr[-1], sigma=1.0, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr


def _sample(img, xs, ys):
    return ndimage.map_coordinates(img, [ys.ravel(), xs.ravel()], order=1, mode="nearest").reshape(xs.shape)


class LKTracker(Tracker):
    """Pyramidal Lucas-Kanade point tracker.

    Parameters
    ----------
    levels : int
        Pyramid depth (level 0 is full resolution).
    window : int
        Odd side length of the square integration window.
    iters : int
        Maximum Newton iterations per level.
    eig_ref : float
        Confidence is ``min(1, lambda_min / eig_ref)`` where ``lambda_min`` is the
        smaller eigenvalue of the window-summed structure tensor (intensities
        in [0, 1]).
    use_masks : bool
        When the query names its layer, weight window pixels by that layer's
        source-frame mask so neighbouring layers do not drag the point.
    """

    def __init__(self, levels=3, window=15, iters=10, eig_ref=0.01, use_masks=True):
        if window % 2 != 1:
            raise ValueError("window must be odd")
        self.levels = levels
        self.window = window
        self.iters = iters
        self.eig_ref = eig_ref
        self.use_masks = use_masks
        self._cache = {}

    def _mask_levels(self, video, layer_id, t):
        key = (id(video), "mask", layer_id, t)
        if key not in self._cache:
            track = next((l for l in video.layers if l.layer_id == layer_id), None)
            if track is None or not track.alive(t):
                self._cache[key] = None
            else:
                self._cache[key] = _pyramid(track.mask_at(t).astype(np.float64), self.levels)
        return self._cache[key]

    def _levels(self, video, t):
        key = (id(video), t)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            gray = to_gray(video.frames[t])
            pyr = _pyramid(gray, self.levels)
            grads = [np.gradient(level) for level in pyr]  # (d/drow, d/dcol)
            self._cache[key] = (pyr, grads)
        return self._cache[key]

    def _track(self, query, video):
        src_pyr, src_grad = self._levels(video, query.source_frame)
        dst_pyr, _ = self._levels(video, query.target_frame)
        pts = query.points
        n = len(pts)
        half = self.window // 2
        oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
        ox = ox.ravel()[None, :].astype(np.float64)
        oy = oy.ravel()[None, :].astype(np.float64)
        area = float(self.window * self.window)

        weights = None
        if self.use_masks and query.layer is not None and video.layers:
            weights = self._mask_levels(video, query.layer, query.source_frame)

        guess = np.zeros((n, 2))
        conf = np.zeros(n)
        for lvl in range(self.levels - 1, -1, -1):
            scale = 2.0 ** lvl
            p = pts / scale
            wx = p[:, 0:1] + ox
            wy = p[:, 1:2] + oy
            tmpl = _sample(src_pyr[lvl], wx, wy)
            gy_img, gx_img = src_grad[lvl]
            ix = _sample(gx_img, wx, wy)
            iy = _sample(gy_img, wx, wy)
            if weights is not None:
                wm = _sample(weights[lvl], wx, wy)
                empty = wm.sum(1) < 1e-6
                wm[empty] = 1.0
                ix = ix * np.sqrt(wm)
                iy = iy * np.sqrt(wm)
                tmpl_w = np.sqrt(wm)
            else:
                tmpl_w = 1.0
            gxx = (ix * ix).sum(1)
            gxy = (ix * iy).sum(1)
            gyy = (iy * iy).sum(1)
            det = gxx * gyy - gxy * gxy
            ok = det > 1e-12 * area * area
            v = np.zeros((n, 2))
            active = ok.copy()
            for _ in range(self.iters):
                if not active.any():
                    break
                qx = wx + (guess[:, 0:1] + v[:, 0:1])
                qy = wy + (guess[:, 1:2] + v[:, 1:2])
                diff = (tmpl - _sample(dst_pyr[lvl], qx, qy)) * tmpl_w
                bx = (diff * ix).sum(1)
                by = (diff * iy).sum(1)
                safe = np.where(ok, det, 1.0)
                ex = (gyy * bx - gxy * by) / safe
                ey = (gxx * by - gxy * bx) / safe
                ex[~active] = 0.0
                ey[~active] = 0.0
                v[:, 0] += ex
                v[:, 1] += ey
                active &= np.hypot(ex, ey) >= 0.01
            guess = guess + v
            if lvl > 0:
                guess *= 2.0
            else:
                tr = gxx + gyy
                dd = np.sqrt(np.maximum((gxx - gyy) ** 2 + 4 * gxy ** 2, 0.0))
                lam_min = 0.5 * (tr - dd)
                conf = np.clip(lam_min / self.eig_ref, 0.0, 1.0)
                conf[~ok] = 0.0

        out = pts + guess
        h, w = video.shape
        bad = ~np.all(np.isfinite(out), axis=1)
        out[bad] = pts[bad]
        outside = bad | (out[:, 0] < 0) | (out[:, 0] > w - 1) | (out[:, 1] < 0) | (out[:, 1] > h - 1)
        out[:, 0] = np.clip(out[:, 0], 0, w - 1)
        out[:, 1] = np.clip(out[:, 1], 0, h - 1)
        conf[outside] = 0.0
        return TrackerResult(out, conf)


class PrecomputedTracker(Tracker):
    """Replays stored trajectories.

    Query points are matched to stored nodes by position at the source frame
    (within ``match_tol`` px); unmatched points go to ``fallback`` if given.
    """

    def __init__(self, trajectories, fallback=None, match_tol=1e-4):
        # trajectories: iterable of (layer_id, t_start, positions (g, n, 2), confidence (g, n))
        self.trajectories = list(trajectories)
        self.fallback = fallback
        self.match_tol = match_tol

    def _track(self, query, video):
        pts = query.points
        out = np.full_like(pts, np.nan)
        conf = np.zeros(len(pts))
        found = np.zeros(len(pts), dtype=bool)
        for layer_id, t0, pos, cf in self.trajectories:
            if query.layer is not None and layer_id != query.layer:
                continue
            n = pos.shape[1]
            s, d = query.source_frame - t0, query.target_frame - t0
            if not (0 <= s < n and 0 <= d < n):
                continue
            src = pos[:, s, :]
            for i in np.flatnonzero(~found):
                dist = np.hypot(*(src - pts[i]).T)
                k = int(np.argmin(dist))
                if dist[k] <= self.match_tol:
                    out[i] = pos[k, d]
                    conf[i] = cf[k, d]
                    found[i] = True
        if not found.all():
            if self.fallback is None:
                raise TrackingError(f"{int((~found).sum())} query points have no stored trajectory")
            rest = TrackerQuery(query.source_frame, query.target_frame, pts[~found], query.layer)
            res = self.fallback.track(rest, video)
            out[~found] = res.points
            conf[~found] = res.confidence
        return TrackerResult(out, conf)


def track(query, video, tracker=None):
    """Run ``tracker`` (default: oracle if the video has a motion model, else LK)."""
    if tracker is None:
        tracker = OracleTracker() if getattr(video, "motion", None) is not None else LKTracker()
    return tracker.track(query, video)


def make_tracker(name, **kwargs):
    name = name.lower()
    if name == "oracle":
        return OracleTracker(**kwargs)
    if name in ("lk", "lucas-kanade"):
        return LKTracker(**kwargs)
    raise ValueError(f"unknown tracker {name!r}")
