"""Video containers: raster frames plus per-layer mask tracks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FrameRangeError

__all__ = ["LayerMaskTrack", "FrameSequence", "label_map"]


@dataclass
class LayerMaskTrack:
    """Binary masks of one semantic layer over frames ``t_start..t_end``."""

    layer_id: int
    t_start: int
    t_end: int
    masks: np.ndarray  # (t_end - t_start + 1, h, w) bool

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool)
        if self.t_start > self.t_end:
            raise ValueError("t_start must not exceed t_end")
        if self.masks.ndim != 3 or len(self.masks) != self.t_end - self.t_start + 1:
            raise ValueError("need one mask per frame in [t_start, t_end]")

    def mask_at(self, t):
        """Mask at absolute frame ``t``; all-False outside the lifetime."""
        if t < self.t_start or t > self.t_end:
            return np.zeros(self.masks.shape[1:], dtype=bool)
        return self.masks[t - self.t_start]

    def alive(self, t):
        return self.t_start <= t <= self.t_end

    @property
    def n_frames(self):
        return self.t_end - self.t_start + 1


@dataclass
class FrameSequence:
    """An ``n x h x w x 3`` video in [0, 1] with its layer decomposition.

    ``layers[0]`` is the background; higher indices are nearer the camera.
    ``motion`` optionally carries an analytic motion model (synthetic scenes)
    that the oracle tracker evaluates.
    """

    frames: np.ndarray
    layers: list = field(default_factory=list)
    motion: object = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (n, h, w, 3), got {self.frames.shape}")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:3]

    def frame(self, t):
        if not 0 <= t < self.n_frames:
            raise FrameRangeError(f"frame {t} out of range [0, {self.n_frames - 1}]")
        return self.frames[t]

    def check_frame(self, t):
        if not 0 <= int(t) < self.n_frames:
            raise FrameRangeError(f"frame {t} out of range [0, {self.n_frames - 1}]")

    def single_layer(self):
        """Copy with the whole frame treated as one background layer."""
        n, h, w = self.frames.shape[:3]
        bg = LayerMaskTrack(0, 0, n - 1, np.ones((n, h, w), dtype=bool))
        return FrameSequence(self.frames, [bg], self.motion)


def label_map(layers, t, shape, include=None):
    """Per-pixel owning layer index at frame ``t`` (highest covering index wins).

    Pixels covered by no included layer get -1.
    """
    out = np.full(shape, -1, dtype=np.int64)
    for i, track in enumerate(layers):
        if include is not None and i not in include:
            continue
        out[track.mask_at(t)] = i
    return out
