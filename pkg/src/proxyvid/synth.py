"""
Procedural test scenes with analytic motion.

Every layer carries an affine motion ``p = c(t) + s(t) R(theta(t)) u`` that
maps object-local coordinates ``u`` to frame pixels. The same model drives
rasterization, exact masks and the oracle tracker, so ground truth is
available for tracking, inpainting (clean background) and temporal
interpolation (frames at fractional times).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .video import FrameSequence, LayerMaskTrack

__all__ = [
    "TextureSpec",
    "MotionSpec",
    "LayerSpec",
    "SceneSpec",
    "SceneMotion",
    "SyntheticVideo",
    "generate",
    "render_scene_at",
    "standard_suite",
    "SUITE_VERSION",
]

SUITE_VERSION = 1
_SS = 4  # supersampling factor per axis
_TEXTURE_KINDS = ("constant", "checker", "value_noise", "gradient", "noise")
_SHAPES = ("disk", "rectangle", "sprite")


@dataclass
class TextureSpec:
    kind: str = "value_noise"
    scale: float = 12.0  # lattice cell / checker period / gradient length, px
    colors: list = field(default_factory=lambda: [[0.2, 0.3, 0.5], [0.8, 0.7, 0.4]])
    octaves: int = 1
    direction: list = field(default_factory=lambda: [1.0, 0.0])


@dataclass
class MotionSpec:
    """Affine motion; ``path`` keyframes ``[t, cx, cy]`` override the linear centre."""

    center: list = field(default_factory=lambda: [0.0, 0.0])
    velocity: list = field(default_factory=lambda: [0.0, 0.0])
    angle: float = 0.0
    angular_velocity: float = 0.0
    scale: float = 1.0
    scale_rate: float = 0.0
    path: list | None = None


@dataclass
class LayerSpec:
    shape: str = "disk"
    size: list = field(default_factory=lambda: [10.0])  # radius, or [w, h]
    texture: TextureSpec = field(default_factory=TextureSpec)
    motion: MotionSpec = field(default_factory=MotionSpec)
    name: str = ""


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 64
    n_frames: int = 8
    layers: list = field(default_factory=list)
    background: TextureSpec = field(default_factory=TextureSpec)
    background_motion: MotionSpec = field(default_factory=MotionSpec)
    seed: int = 0
    name: str = ""
    version: int = SUITE_VERSION

    def validate(self):
        if self.height < 4 or self.width < 4:
            raise ValueError("resolution must be at least 4x4")
        if self.n_frames < 1:
            raise ValueError("n_frames must be positive")
        for tex in [self.background] + [l.texture for l in self.layers]:
            if tex.kind not in _TEXTURE_KINDS:
                raise ValueError(f"unknown texture kind {tex.kind!r}")
            if tex.scale <= 0:
                raise ValueError("texture scale must be positive")
        for layer in self.layers:
            if layer.shape not in _SHAPES:
                raise ValueError(f"unknown shape {layer.shape!r}")
            if any(s <= 0 for s in layer.size):
                raise ValueError("shape size must be positive")
            if layer.motion.scale <= 0:
                raise ValueError("motion scale must be positive")
        return self

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["background"] = TextureSpec(**d.get("background", {}))
        d["background_motion"] = MotionSpec(**d.get("background_motion", {}))
        layers = []
        for l in d.get("layers", []):
            l = dict(l)
            l["texture"] = TextureSpec(**l.get("texture", {}))
            l["motion"] = MotionSpec(**l.get("motion", {}))
            layers.append(LayerSpec(**l))
        d["layers"] = layers
        return cls(**d).validate()

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- textures ----------------------------------------------------------------

class _Texture:
    """Evaluates a procedural texture at object-local coordinates."""

    _LATTICE = 64

    def __init__(self, spec, rng):
        self.spec = spec
        self.colors = np.asarray(spec.colors, dtype=np.float64).reshape(-1, 3)
        if spec.kind in ("value_noise", "noise"):
            self.lattice = rng.random((max(1, spec.octaves), 3, self._LATTICE, self._LATTICE))

    def __call__(self, u, v):
        kind = self.spec.kind
        c0, c1 = self.colors[0], self.colors[-1]
        if kind == "constant":
            return np.broadcast_to(c0, u.shape + (3,)).copy()
        if kind == "checker":
            p = self.spec.scale
            k = (np.floor(u / p) + np.floor(v / p)) % 2
            return np.where(k[..., None] > 0, c1, c0)
        if kind == "gradient":
            d = np.asarray(self.spec.direction, dtype=np.float64)
            d = d / np.linalg.norm(d)
            s = np.clip(0.5 + (u * d[0] + v * d[1]) / self.spec.scale, 0.0, 1.0)
            return c0 + s[..., None] * (c1 - c0)
        if kind == "noise":
            n = self._LATTICE
            i = np.floor(u / self.spec.scale).astype(np.int64) % n
            j = np.floor(v / self.spec.scale).astype(np.int64) % n
            return np.stack([self.lattice[0, ch][j, i] for ch in range(3)], axis=-1)
        # value noise: smoothstep-interpolated lattice, octaves halve the cell size
        out = np.zeros(u.shape + (3,))
        total = 0.0
        for o in range(len(self.lattice)):
            cell = self.spec.scale / (2 ** o)
            amp = 0.5 ** o
            out += amp * self._value(u / cell, v / cell, self.lattice[o])
            total += amp
        s = out / total
        return c0 + s * (c1 - c0)

    def _value(self, fu, fv, lat):
        n = self._LATTICE
        iu = np.floor(fu)
        iv = np.floor(fv)
        a = fu - iu
        b = fv - iv
        a = a * a * (3 - 2 * a)
        b = b * b * (3 - 2 * b)
        i0 = iu.astype(np.int64) % n
        j0 = iv.astype(np.int64) % n
        i1 = (i0 + 1) % n
        j1 = (j0 + 1) % n
        res = []
        for ch in range(3):
            L = lat[ch]
            top = L[j0, i0] * (1 - a) + L[j0, i1] * a
            bot = L[j1, i0] * (1 - a) + L[j1, i1] * a
            res.append(top * (1 - b) + bot * b)
        return np.stack(res, axis=-1)


# -- motion --------------------------------------------------------------------

def _pose(m, t):
    if m.path:
        keys = np.asarray(m.path, dtype=np.float64)
        cx = float(np.interp(t, keys[:, 0], keys[:, 1]))
        cy = float(np.interp(t, keys[:, 0], keys[:, 2]))
    else:
        cx = m.center[0] + m.velocity[0] * t
        cy = m.center[1] + m.velocity[1] * t
    theta = m.angle + m.angular_velocity * t
    s = m.scale * (1.0 + m.scale_rate * t)
    return cx, cy, theta, s


def _to_local(m, t, x, y):
    cx, cy, th, s = _pose(m, t)
    dx, dy = x - cx, y - cy
    c, sn = math.cos(th), math.sin(th)
    return (c * dx + sn * dy) / s, (-sn * dx + c * dy) / s


def _to_frame(m, t, u, v):
    cx, cy, th, s = _pose(m, t)
    c, sn = math.cos(th), math.sin(th)
    return cx + s * (c * u - sn * v), cy + s * (sn * u + c * v)


def _inside(layer, u, v):
    if layer.shape == "disk":
        r = layer.size[0]
        return u * u + v * v <= r * r
    w, h = (layer.size[0], layer.size[-1])
    box = (np.abs(u) <= w / 2) & (np.abs(v) <= h / 2)
    if layer.shape == "sprite":  # rounded-corner box
        rr = 0.25 * min(w, h)
        qu = np.maximum(np.abs(u) - (w / 2 - rr), 0)
        qv = np.maximum(np.abs(v) - (h / 2 - rr), 0)
        return box & (qu * qu + qv * qv <= rr * rr)
    return box


class SceneMotion:
    """Analytic motion model of a scene; layer 0 is the background."""

    def __init__(self, spec):
        self.spec = spec
        self.motions = [spec.background_motion] + [l.motion for l in spec.layers]

    @property
    def n_layers(self):
        return len(self.motions)

    def map_points(self, layer, t_src, t_dst, points):
        """Exact position at ``t_dst`` of layer points given at ``t_src``."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        m = self.motions[layer]
        u, v = _to_local(m, t_src, p[:, 0], p[:, 1])
        x, y = _to_frame(m, t_dst, u, v)
        return np.stack([x, y], axis=1)

    def covers(self, layer, t, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if layer == 0:
            return np.ones(len(p), dtype=bool)
        spec = self.spec.layers[layer - 1]
        u, v = _to_local(spec.motion, t, p[:, 0], p[:, 1])
        return _inside(spec, u, v)

    def visible(self, layer, t, points):
        """In-frame and not covered by any nearer layer."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        h, w = self.spec.height, self.spec.width
        vis = (p[:, 0] >= -0.5) & (p[:, 0] <= w - 0.5) & (p[:, 1] >= -0.5) & (p[:, 1] <= h - 0.5)
        for j in range(layer + 1, self.n_layers):
            vis &= ~self.covers(j, t, p)
        return vis

    def front_layer(self, t, points):
        """Index of the nearest layer covering each point (-1 outside the frame)."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        h, w = self.spec.height, self.spec.width
        out = np.zeros(len(p), dtype=np.int64)
        for j in range(1, self.n_layers):
            out[self.covers(j, t, p)] = j
        off = (p[:, 0] < -0.5) | (p[:, 0] > w - 0.5) | (p[:, 1] < -0.5) | (p[:, 1] > h - 0.5)
        out[off] = -1
        return out


@dataclass
class SyntheticVideo:
    video: FrameSequence
    clean_background: np.ndarray
    motion: SceneMotion
    spec: SceneSpec

    @property
    def frames(self):
        return self.video.frames

    @property
    def layers(self):
        return self.video.layers


def _textures(spec):
    rng = np.random.default_rng(spec.seed)
    bg = _Texture(spec.background, rng)
    fgs = [_Texture(l.texture, rng) for l in spec.layers]
    return bg, fgs


def _raster(spec, t, textures, background_only=False):
    h, w = spec.height, spec.width
    off = (np.arange(_SS) + 0.5) / _SS - 0.5
    ys = (np.arange(h)[:, None] + off[None, :]).ravel()
    xs = (np.arange(w)[:, None] + off[None, :]).ravel()
    X, Y = np.meshgrid(xs, ys)
    bg_tex, fg_tex = textures
    u, v = _to_local(spec.background_motion, t, X, Y)
    color = bg_tex(u, v)
    # centre samples decide the exact masks
    cx, cy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    owner = np.zeros((h, w), dtype=np.int64)
    if not background_only:
        for j, (layer, tex) in enumerate(zip(spec.layers, fg_tex), start=1):
            u, v = _to_local(layer.motion, t, X, Y)
            cov = _inside(layer, u, v)
            if cov.any():
                color[cov] = tex(u[cov], v[cov])
            uc, vc = _to_local(layer.motion, t, cx, cy)
            owner[_inside(layer, uc, vc)] = j
    img = color.reshape(h, _SS, w, _SS, 3).mean(axis=(1, 3))
    return np.clip(img, 0.0, 1.0), owner


def render_scene_at(spec, t, background_only=False):
    """Rasterize the scene at a (possibly fractional) time.

    Returns
    -------
    image : (h, w, 3) array
    owner : (h, w) int array
        Front-most layer index at each pixel centre.
    """
    return _raster(spec, float(t), _textures(spec), background_only)


def generate(spec):
    """Render a scene spec into frames, exact masks, motion and clean background."""
    spec.validate()
    textures = _textures(spec)
    n, h, w = spec.n_frames, spec.height, spec.width
    frames = np.zeros((n, h, w, 3))
    clean = np.zeros((n, h, w, 3))
    owners = np.zeros((n, h, w), dtype=np.int64)
    for t in range(n):
        frames[t], owners[t] = _raster(spec, float(t), textures)
        clean[t], _ = _raster(spec, float(t), textures, background_only=True)
    layers = [LayerMaskTrack(0, 0, n - 1, owners == 0)]
    for j in range(1, len(spec.layers) + 1):
        present = np.flatnonzero((owners == j).any(axis=(1, 2)))
        if len(present) == 0:
            continue
        t0, t1 = int(present[0]), int(present[-1])
        layers.append(LayerMaskTrack(j, t0, t1, owners[t0:t1 + 1] == j))
    motion = SceneMotion(spec)
    video = FrameSequence(frames, layers, motion)
    return SyntheticVideo(video=video, clean_background=clean, motion=motion, spec=spec)


# -- the fixed suite -----------------------------------------------------------

def _bg(seed_scale=14.0):
    return TextureSpec(kind="value_noise", scale=seed_scale, colors=[[0.15, 0.35, 0.25], [0.75, 0.8, 0.55]])


def _fg(scale=8.0, colors=None):
    return TextureSpec(kind="value_noise", scale=scale,
                       colors=colors or [[0.85, 0.25, 0.15], [0.95, 0.75, 0.3]])


def standard_suite():
    """The six reference scenes S1..S6 (versioned by ``SUITE_VERSION``)."""
    s1 = SceneSpec(height=48, width=48, n_frames=8, background=_bg(), seed=101, name="S1")
    s2 = SceneSpec(
        height=64, width=64, n_frames=16, background=_bg(), seed=102, name="S2",
        layers=[LayerSpec(shape="rectangle", size=[20.0, 20.0], texture=_fg(),
                          motion=MotionSpec(center=[18.0, 24.0], velocity=[1.8, 0.6]), name="square")],
    )
    s3 = SceneSpec(
        height=96, width=96, n_frames=24, background=_bg(16.0), seed=103, name="S3",
        layers=[LayerSpec(shape="disk", size=[18.0], texture=_fg(9.0, [[0.2, 0.2, 0.75], [0.9, 0.5, 0.7]]),
                          motion=MotionSpec(center=[38.0, 44.0], velocity=[0.8, 0.4],
                                            angular_velocity=0.05, scale_rate=0.01), name="disk")],
    )
    s4 = SceneSpec(
        height=64, width=64, n_frames=16, background=_bg(), seed=104, name="S4",
        layers=[LayerSpec(shape="rectangle", size=[20.0, 20.0], texture=_fg(),
                          motion=MotionSpec(center=[26.0, 30.0], velocity=[4.0, 0.0]), name="exiting")],
    )
    s5 = SceneSpec(
        height=64, width=64, n_frames=16, background=_bg(), seed=105, name="S5",
        layers=[
            LayerSpec(shape="rectangle", size=[14.0, 14.0], texture=_fg(7.0),
                      motion=MotionSpec(center=[52.0, 36.0], velocity=[-2.6, 0.0]), name="square"),
            LayerSpec(shape="disk", size=[8.0], texture=_fg(6.0, [[0.2, 0.3, 0.8], [0.6, 0.8, 0.95]]),
                      motion=MotionSpec(center=[12.0, 27.0], velocity=[2.6, 0.0]), name="disk"),
        ],
    )
    s6 = SceneSpec(
        height=96, width=96, n_frames=6, background=_bg(16.0), seed=106, name="S6",
        layers=[LayerSpec(shape="rectangle", size=[24.0, 24.0], texture=_fg(10.0),
                          motion=MotionSpec(center=[20.0, 22.0], velocity=[9.6, 7.2]), name="fast")],
    )
    return [s1, s2, s3, s4, s5, s6]
