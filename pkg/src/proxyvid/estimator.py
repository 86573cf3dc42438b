"""
Estimator-style facade over the pipeline.

``ProxyVideoModel().fit(video)`` vectorizes, tracks, propagates and fits;
``transform`` renders the reconstruction and ``predict`` renders arbitrary
(fractional) times. Hyper-parameters follow the usual ``get_params`` /
``set_params`` contract so the model can be cloned and grid-searched.
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import appearance, config as config_mod, metrics, pipeline, renderer, tracking
from .propagation import PropagationConfig
from .vectorizer import VectorizerConfig
from .video import FrameSequence, LayerMaskTrack

__all__ = ["ProxyVideoModel", "check_video", "check_masks", "make_tracker_from_config"]

log = logging.getLogger(__name__)


def check_masks(masks, shape):
    """Validate mask tracks against an (n, h, w) video shape."""
    n, h, w = shape
    if not masks:
        raise ValueError("at least one (background) layer is required")
    for i, track in enumerate(masks):
        if not isinstance(track, LayerMaskTrack):
            raise TypeError(f"layer {i}: expected LayerMaskTrack, got {type(track).__name__}")
        if track.masks.shape[1:] != (h, w):
            raise ValueError(f"layer {i}: mask size {track.masks.shape[1:]} != frame size {(h, w)}")
        if track.t_start < 0 or track.t_end >= n:
            raise ValueError(f"layer {i}: lifetime [{track.t_start}, {track.t_end}] outside the video")
    if masks[0].t_start != 0 or masks[0].t_end != n - 1:
        raise ValueError("layer 0 (background) must span every frame")
    return masks


def check_video(X, masks=None):
    """Coerce ``X`` to a validated :class:`FrameSequence`.

    ``X`` may be a FrameSequence, a synthetic video (anything with a
    ``video`` attribute) or an (n, h, w, 3) array in [0, 1]; a bare array
    without ``masks`` becomes a single background layer.
    """
    if hasattr(X, "video") and isinstance(X.video, FrameSequence):
        X = X.video
    if isinstance(X, FrameSequence):
        video = X if masks is None else FrameSequence(X.frames, list(masks), X.motion)
    else:
        frames = np.asarray(X, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"expected an (n, h, w, 3) array, got shape {frames.shape}")
        video = FrameSequence(frames, list(masks) if masks is not None else [])
        if not video.layers:
            video = video.single_layer()
    if not np.all(np.isfinite(video.frames)):
        raise ValueError("frames contain NaN or Inf")
    if video.frames.min() < 0.0 or video.frames.max() > 1.0:
        raise ValueError("frame values must lie in [0, 1]")
    check_masks(video.layers, video.frames.shape[:3])
    return video


def make_tracker_from_config(cfg, video):
    name = cfg.name
    if name == "auto":
        name = "oracle" if video.motion is not None else "lk"
    if name == "oracle":
        return tracking.OracleTracker()
    return tracking.LKTracker(levels=cfg.levels, window=cfg.window, iters=cfg.iters, eig_ref=cfg.eig_ref)


class ProxyVideoModel(TransformerMixin, BaseEstimator):
    """Layered proxy-node video model.

    Parameters
    ----------
    code_dim, hidden, n_layers, n_freq : int
        Texture code size and decoder shape.
    steps, batch_size : int
    learning_rate : float
    eps_d : float
        Coverage threshold in pixels; interior seed spacing is ``eps_d / 2``.
    tracker : {"auto", "oracle", "lk"} or Tracker
    disable_position_input, disable_freq_encoding, disable_layering : bool
        Ablation switches.
    random_state : int
    """

    def __init__(self, code_dim=32, hidden=128, n_layers=6, n_freq=6, steps=3000, batch_size=4096,
                 learning_rate=1e-3, eps_d=config_mod.DESK_EPS_D, tracker="auto",
                 disable_position_input=False, disable_freq_encoding=False, disable_layering=False,
                 random_state=0):
        self.code_dim = code_dim
        self.hidden = hidden
        self.n_layers = n_layers
        self.n_freq = n_freq
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.eps_d = eps_d
        self.tracker = tracker
        self.disable_position_input = disable_position_input
        self.disable_freq_encoding = disable_freq_encoding
        self.disable_layering = disable_layering
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg, **overrides):
        """Build from a :class:`~proxyvid.config.PipelineConfig`."""
        t = cfg.train
        params = dict(code_dim=t.code_dim, hidden=t.hidden, n_layers=t.n_layers, n_freq=t.n_freq,
                      steps=t.steps, batch_size=t.batch_size, learning_rate=t.learning_rate,
                      eps_d=cfg.propagation.eps_d, tracker=cfg.tracker.name,
                      disable_position_input=t.disable_position_input,
                      disable_freq_encoding=t.disable_freq_encoding,
                      disable_layering=t.disable_layering, random_state=t.seed)
        params.update(overrides)
        return cls(**params)

    def _train_config(self):
        return appearance.TrainConfig(
            steps=self.steps, batch_size=self.batch_size, learning_rate=self.learning_rate,
            seed=self.random_state, code_dim=self.code_dim, hidden=self.hidden, n_layers=self.n_layers,
            n_freq=self.n_freq, disable_position_input=self.disable_position_input,
            disable_freq_encoding=self.disable_freq_encoding, disable_layering=self.disable_layering)

    def _tracker(self, video):
        if isinstance(self.tracker, tracking.Tracker):
            return self.tracker
        return make_tracker_from_config(config_mod.TrackerConfig(name=self.tracker), video)

    def fit(self, X, y=None, masks=None, layers=None):
        """Fit to a video.

        Parameters
        ----------
        X : FrameSequence, SyntheticVideo or (n, h, w, 3) array
        y : ignored
        masks : list of LayerMaskTrack, optional
        layers : list of ProxyLayer, optional
            Pre-built trajectories; skips vectorization and propagation.
        """
        video = check_video(X, masks)
        train = self._train_config()
        if self.disable_layering:
            video = video.single_layer()
        if layers is None:
            prop = PropagationConfig(eps_d=self.eps_d)
            vec = VectorizerConfig(spacing=self.eps_d / 2.0)
            layers = pipeline.build_layers(video, self._tracker(video), vec, prop)
        meta = {"eps_d": float(self.eps_d), "config": {k: v for k, v in self.get_params().items()
                                                       if not isinstance(v, tracking.Tracker)}}
        rep, losses = appearance.fit(video, layers, train, meta_extra=meta)
        self.layers_ = layers
        self.representation_ = rep
        self.loss_curve_ = np.asarray(losses)
        self.n_frames_ = video.n_frames
        return self

    def transform(self, X):
        """Reconstructed frames (n, h, w, 3) of the fitted video; ``X`` is ignored."""
        check_is_fitted(self, "representation_")
        return renderer.render_sequence(self.representation_)

    def predict(self, times):
        """Frames rendered at (possibly fractional) ``times``."""
        check_is_fitted(self, "representation_")
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        return np.stack([renderer.render_time(self.representation_, t) for t in times])

    def score(self, X, y=None):
        """Mean per-frame PSNR of the reconstruction against ``X``."""
        check_is_fitted(self, "representation_")
        video = check_video(X)
        recon = self.transform(video)
        return float(np.mean([metrics.psnr(recon[t], video.frames[t]) for t in range(video.n_frames)]))
