"""
Decode frames from a fitted representation.

Every pixel is routed to one layer (by mask, or by the front-most included
layer in composite mode), located in that layer's triangulation at the
frame, and decoded from its barycentrically blended code.
"""
from __future__ import annotations

import math

import numpy as np

from .appearance import interpolate_feature, normalize_coords
from .exceptions import FrameRangeError
from .representation import frame_mesh

__all__ = ["render_frame", "render_superres", "render_time", "render_sequence", "RECONSTRUCT", "COMPOSITE"]

RECONSTRUCT = "reconstruct"
COMPOSITE = "composite"
CHUNK = 16384


def _owners(rep, t, include):
    """Per-pixel layer index at integer frame ``t``; uncovered pixels fall to layer 0."""
    owner = np.zeros((rep.height, rep.width), dtype=np.int64)
    for i, track in enumerate(rep.masks):
        if i == 0 or (include is not None and i not in include):
            continue
        owner[track.mask_at(t)] = i
    return owner


def _decode_points(rep, mesh_of, t, pts, owner, out):
    """Decode ``pts`` (m, 2) in pixel units, writing rows of ``out`` (m, 3)."""
    offsets = rep.code_offsets()
    codes = rep.all_codes()
    for i in np.unique(owner):
        sel = np.flatnonzero(owner == i)
        mesh = mesh_of(int(i))
        ids, w = mesh.weights(pts[sel], extend=True)
        ids = ids + offsets[i]
        for s in range(0, len(sel), CHUNK):
            part = slice(s, s + CHUNK)
            f = interpolate_feature(codes, ids[part], w[part])
            p = pts[sel[part]]
            tn, xn, yn = normalize_coords(t, p[:, 0], p[:, 1], rep.n_frames, rep.height, rep.width)
            _, enc = rep.decoder.inputs(f, np.full(len(p), tn), xn, yn)
            out[sel[part]] = rep.decoder.forward(enc)
    return out


def _include_indices(rep, mode, layers):
    if mode == RECONSTRUCT:
        return None
    if mode != COMPOSITE:
        raise ValueError(f"unknown render mode {mode!r}")
    if layers is None:
        return None
    return {int(i) for i in layers}


def _check_time(rep, t):
    if not 0 <= t <= rep.n_frames - 1:
        raise FrameRangeError(f"time {t} out of range [0, {rep.n_frames - 1}]")


def render_frame(rep, frame, mode=RECONSTRUCT, layers=None):
    """Render integer frame ``frame`` as an (h, w, 3) raster in [0, 1].

    Parameters
    ----------
    rep : Representation
    frame : int
    mode : {"reconstruct", "composite"}
        Reconstruct routes each pixel through the layer its mask assigns.
        Composite uses the front-most layer of ``layers`` (indices into
        ``rep.layers``) covering the pixel, and the background elsewhere.
    layers : iterable of int, optional
        Layer subset for composite mode; all layers when omitted.
    """
    if int(frame) != frame:
        raise ValueError("render_frame needs an integer frame; use render_time")
    frame = int(frame)
    _check_time(rep, frame)
    include = _include_indices(rep, mode, layers)
    h, w = rep.height, rep.width
    yy, xx = np.mgrid[0:h, 0:w]
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    owner = _owners(rep, frame, include).ravel()
    out = np.empty((h * w, 3))
    _decode_points(rep, lambda i: rep.mesh(i, frame), frame, pts, owner, out)
    return out.reshape(h, w, 3)


def render_sequence(rep, mode=RECONSTRUCT, layers=None):
    return np.stack([render_frame(rep, t, mode, layers) for t in range(rep.n_frames)])


def render_superres(rep, frame, scale, mode=RECONSTRUCT, layers=None):
    """Render at ``ceil(scale*h) x ceil(scale*w)``.

    Output pixel ``(r, c)`` samples the continuous point
    ``((c + 0.5) / scale - 0.5, (r + 0.5) / scale - 0.5)`` so a ``k x k`` box
    filter of the result is centred on the original pixel grid. Masks are
    read at the nearest original pixel.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    frame = int(frame)
    _check_time(rep, frame)
    include = _include_indices(rep, mode, layers)
    h, w = rep.height, rep.width
    sh, sw = math.ceil(scale * h - 1e-9), math.ceil(scale * w - 1e-9)
    ys = (np.arange(sh) + 0.5) / scale - 0.5
    xs = (np.arange(sw) + 0.5) / scale - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    owner_lr = _owners(rep, frame, include)
    ri = np.clip(np.rint(pts[:, 1]).astype(np.int64), 0, h - 1)
    ci = np.clip(np.rint(pts[:, 0]).astype(np.int64), 0, w - 1)
    owner = owner_lr[ri, ci]
    out = np.empty((len(pts), 3))
    _decode_points(rep, lambda i: rep.mesh(i, frame), frame, pts, owner, out)
    return out.reshape(sh, sw, 3)


def nearest_frame(t):
    """Mask frame for fractional ``t``: nearest integer, ties to the earlier frame."""
    return int(math.ceil(t - 0.5))


def render_time(rep, t, mode=RECONSTRUCT, layers=None):
    """Render at fractional time ``t`` by remapping node trajectories.

    Node positions are linear between the neighbouring frames, each layer is
    re-triangulated at those positions, and masks come from the nearest frame.
    Integer ``t`` is identical to :func:`render_frame`.
    """
    t = float(t)
    _check_time(rep, t)
    if t == int(t):
        return render_frame(rep, int(t), mode, layers)
    include = _include_indices(rep, mode, layers)
    h, w = rep.height, rep.width
    yy, xx = np.mgrid[0:h, 0:w]
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    tm = nearest_frame(t)
    owner = _owners(rep, tm, include).ravel()
    meshes = {}

    def mesh_of(i):
        if i not in meshes:
            layer = rep.layers[i]
            tc = min(max(t, layer.t_start), layer.t_end)
            meshes[i] = frame_mesh(layer.at_time(tc))
        return meshes[i]

    out = np.empty((h * w, 3))
    _decode_points(rep, mesh_of, t, pts, owner, out)
    return out.reshape(h, w, 3)
