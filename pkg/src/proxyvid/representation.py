"""The fitted video representation: layers of proxy nodes, their codes and the decoder."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .exceptions import DegeneratePointSetError

__all__ = [
    "Representation",
    "FrameMesh",
    "frame_mesh",
    "param_count",
    "trajectory_count",
    "validate",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


@dataclass
class FrameMesh:
    """Triangulation of one layer at one frame, over de-duplicated nodes.

    ``node_ids[k]`` is the layer node behind triangulation vertex ``k``.
    ``tri`` is ``None`` when the nodes are degenerate (fewer than three
    distinct points, or collinear); queries then use the nearest node.
    """

    tri: geometry.Triangulation | None
    node_ids: np.ndarray
    points: np.ndarray

    def weights(self, query, extend=True):
        """(n, 3) layer-node ids and barycentric weights for query points."""
        q = np.asarray(query, dtype=np.float64).reshape(-1, 2)
        if self.tri is None:
            ids = np.zeros((len(q), 3), dtype=np.int64)
            w = np.zeros((len(q), 3))
            if len(self.points):
                _, k = cKDTree(self.points).query(q)
                ids[:, 0] = self.node_ids[k]
                ids[:, 1:] = ids[:, :1]
                w[:, 0] = 1.0
            return ids, w
        vid, w = geometry.interpolation_weights(q, self.tri, extend=extend)
        ids = np.where(vid >= 0, self.node_ids[np.maximum(vid, 0)], -1)
        return ids, w


def frame_mesh(points):
    """Triangulate node positions, merging coincident nodes (lowest index wins)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    keep = np.ones(len(pts), dtype=bool)
    if len(pts) > 1:
        for i, j in sorted(cKDTree(pts).query_pairs(geometry.DUPLICATE_TOL)):
            if keep[i]:
                keep[j] = False
    ids = np.flatnonzero(keep)
    sub = pts[ids]
    try:
        tri = geometry.delaunay(sub)
    except DegeneratePointSetError:
        tri = None
    return FrameMesh(tri, ids, sub)


@dataclass
class Representation:
    """Layered proxy-node representation of a video.

    Attributes
    ----------
    layers : list of ProxyLayer
        Index 0 is the background; higher indices are nearer.
    codes : list of (g_i, c) arrays
        Texture codes, one row per node.
    decoder : DecoderParams
    masks : list of LayerMaskTrack
        Per-layer masks used to assign pixels to layers when rendering.
    meta : dict
        ``height``, ``width``, ``n_frames``, ``eps_d``, ``config`` and
        ``format_version``.
    """

    layers: list
    codes: list
    decoder: object
    masks: list
    meta: dict = field(default_factory=dict)
    _meshes: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def height(self):
        return int(self.meta["height"])

    @property
    def width(self):
        return int(self.meta["width"])

    @property
    def n_frames(self):
        return int(self.meta["n_frames"])

    @property
    def code_dim(self):
        return self.decoder.code_dim

    def mesh(self, layer_index, t):
        """Cached :class:`FrameMesh` of one layer at integer frame ``t``."""
        key = (layer_index, int(t))
        if key not in self._meshes:
            self._meshes[key] = frame_mesh(self.layers[layer_index].at(int(t)))
        return self._meshes[key]

    def code_offsets(self):
        sizes = [len(c) for c in self.codes]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    def all_codes(self):
        if not self.codes:
            return np.zeros((0, self.code_dim))
        return np.concatenate(self.codes, axis=0)

    def with_codes(self, codes):
        """Copy sharing geometry and decoder, with replaced per-layer codes."""
        out = Representation(self.layers, [np.array(c) for c in codes], self.decoder, self.masks,
                             dict(self.meta))
        out._meshes = self._meshes
        return out


def param_count(rep):
    """Optimized parameters: codes (sum of g_i * c) plus decoder weights and biases."""
    n = sum(int(np.asarray(c).size) for c in rep.codes)
    return n + rep.decoder.n_params


def trajectory_count(rep):
    """Stored trajectory scalars (2 per node per frame); reported separately."""
    return sum(int(l.positions.size) for l in rep.layers)


def validate(rep):
    """All invariant violations of a representation (empty list when valid)."""
    problems = []
    dec = rep.decoder
    for i, (layer, codes) in enumerate(zip(rep.layers, rep.codes)):
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[0] != layer.n_nodes:
            problems.append(f"layer {i}: row-count mismatch ({codes.shape[0] if codes.ndim else 0} code rows, "
                            f"{layer.n_nodes} nodes)")
        elif codes.shape[1] != dec.code_dim:
            problems.append(f"layer {i}: code dimension {codes.shape[1]} != decoder code_dim {dec.code_dim}")
        if not np.all(np.isfinite(codes)):
            problems.append(f"layer {i}: non-finite code")
        if not np.all(np.isfinite(layer.positions)):
            problems.append(f"layer {i}: non-finite position")
        if layer.positions.shape[1] != layer.t_end - layer.t_start + 1:
            problems.append(f"layer {i}: trajectory length does not match lifetime")
        if len(layer.round_tag) != layer.n_nodes:
            problems.append(f"layer {i}: round tags do not partition the nodes")
        if layer.t_start < 0 or layer.t_end >= rep.meta.get("n_frames", 0):
            problems.append(f"layer {i}: lifetime outside the video")
    if len(rep.codes) != len(rep.layers):
        problems.append("codes/layers count mismatch")
    if rep.layers:
        bg = rep.layers[0]
        if bg.t_start != 0 or bg.t_end != rep.meta.get("n_frames", 0) - 1:
            problems.append("layer 0 must span all frames")
    problems.extend(dec.check())
    if len(rep.masks) != len(rep.layers):
        problems.append("masks/layers count mismatch")
    for i, m in enumerate(rep.masks):
        if m.masks.shape[1:] != (rep.meta.get("height"), rep.meta.get("width")):
            problems.append(f"layer {i}: mask size does not match meta dimensions")
    return problems
