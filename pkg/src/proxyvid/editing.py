"""Layer-drop inpainting and keyframe edit propagation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .appearance import TrainConfig, build_sample_table, optimize
from .exceptions import EditError
from .renderer import COMPOSITE, render_frame

__all__ = ["EditConfig", "inpaint", "layer_indices", "trainable_nodes", "edit_keyframe"]

log = logging.getLogger(__name__)


@dataclass
class EditConfig:
    steps: int = 500
    learning_rate: float = 5e-3
    max_batch: int = 16384
    seed: int = 0


def layer_indices(rep, layer_ids):
    """Map layer ids to positions in ``rep.layers``."""
    pos = {int(l.layer_id): i for i, l in enumerate(rep.layers)}
    out = set()
    for lid in layer_ids:
        if int(lid) not in pos:
            raise EditError(f"no layer with id {lid}")
        out.add(pos[int(lid)])
    return out


def inpaint(rep, drop_layers=()):
    """Render every frame with the layers in ``drop_layers`` (ids) removed.

    Returns an (n, h, w, 3) array. Dropped layers' codes are never read.
    """
    drop = layer_indices(rep, drop_layers)
    if 0 in drop:
        raise EditError("the background layer (index 0) cannot be dropped")
    keep = [i for i in range(len(rep.layers)) if i not in drop]
    return np.stack([render_frame(rep, t, COMPOSITE, keep) for t in range(rep.n_frames)])


def _owner_at(rep, t):
    owner = np.full((rep.height, rep.width), -1, dtype=np.int64)
    for i, track in enumerate(rep.masks):
        owner[track.mask_at(t)] = i
    return owner


def _touched_triangles(tri, pix, tol=1e-9):
    """Indices of triangles whose closed interior contains any of ``pix``."""
    corners = tri.corners
    hit = np.zeros(len(corners), dtype=bool)
    lo, hi = corners.min(axis=1), corners.max(axis=1)
    for k in range(len(corners)):
        near = pix[np.all((pix >= lo[k] - tol) & (pix <= hi[k] + tol), axis=1)]
        if len(near) == 0:
            continue
        a, b, c = corners[k]
        den = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1])
        l1 = ((b[1] - c[1]) * (near[:, 0] - c[0]) + (c[0] - b[0]) * (near[:, 1] - c[1])) / den
        l2 = ((c[1] - a[1]) * (near[:, 0] - c[0]) + (a[0] - c[0]) * (near[:, 1] - c[1])) / den
        hit[k] = np.any((l1 >= -tol) & (l2 >= -tol) & (1.0 - l1 - l2 >= -tol))
    return np.flatnonzero(hit)


def trainable_nodes(rep, frame, region):
    """Boolean mask over the concatenated code rows of the region's one-ring.

    A node is trainable when it is a vertex of a triangle (at ``frame``)
    intersecting the region in the layer that owns those pixels. Pixels
    outside the layer's hull add the nodes they are extrapolated from.
    """
    region = np.asarray(region, dtype=bool)
    owner = _owner_at(rep, frame)
    offsets = rep.code_offsets()
    rows = np.zeros(offsets[-1], dtype=bool)
    covered = region & (owner >= 0)
    if not covered.any():
        raise EditError("edit region lies outside all layers")
    for i in np.unique(owner[covered]):
        ys, xs = np.nonzero(covered & (owner == i))
        pix = np.stack([xs, ys], axis=1).astype(np.float64)
        mesh = rep.mesh(int(i), frame)
        ids, w = mesh.weights(pix, extend=True)
        rows[np.unique(ids[w != 0]) + offsets[i]] = True
        if mesh.tri is not None:
            tris = mesh.tri.triangles[_touched_triangles(mesh.tri, pix)]
            rows[mesh.node_ids[np.unique(tris)] + offsets[i]] = True
    return rows


def edit_keyframe(rep, frame, edited_image, region_mask, config=None):
    """Re-fit the codes around ``region_mask`` so ``frame`` renders as ``edited_image`` there.

    The decoder and all codes outside the region's one-ring stay frozen, so
    the edit travels to other frames only through the shared node codes.
    Returns a new representation; ``rep`` is left untouched.
    """
    config = config or EditConfig()
    frame = int(frame)
    if not 0 <= frame < rep.n_frames:
        raise EditError(f"keyframe {frame} out of range")
    edited = np.asarray(edited_image, dtype=np.float64)
    if edited.shape != (rep.height, rep.width, 3):
        raise EditError(f"edited image must be {rep.height}x{rep.width}x3, got {edited.shape}")
    region = np.asarray(region_mask, dtype=bool)
    if region.shape != (rep.height, rep.width):
        raise EditError("region mask size does not match the video")
    if not region.any():
        raise EditError("empty edit region")
    rows = trainable_nodes(rep, frame, region)
    table = build_sample_table(rep, {frame: edited}, frame_indices=[frame], pixel_mask=region)
    codes = rep.all_codes().copy()
    train_cfg = TrainConfig(learning_rate=config.learning_rate, seed=config.seed,
                            code_dim=rep.code_dim)
    batch = min(len(table), config.max_batch)
    losses = optimize(table, codes, rep.decoder, train_cfg, trainable_rows=rows, train_decoder=False,
                      batch_size=batch, steps=config.steps, lr=config.learning_rate)
    codes = codes.astype(np.float32).astype(np.float64)
    # rows outside the one-ring are restored exactly (float32 rounding must not touch them)
    codes[~rows] = rep.all_codes()[~rows]
    offsets = rep.code_offsets()
    out = rep.with_codes([codes[offsets[i]:offsets[i + 1]] for i in range(len(rep.layers))])
    out.meta["edit"] = {"frame": frame, "trainable_nodes": int(rows.sum()),
                        "final_loss": float(losses[-1]) if losses else None}
    log.info("edit at frame %d: %d trainable nodes, final loss %.3g", frame, int(rows.sum()),
             losses[-1] if losses else float("nan"))
    return out
