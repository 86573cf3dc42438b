"""
Proxy-node trajectories for one layer.

Seeds are chained forward through the layer's lifetime. Supplementation
rounds then fill coverage gaps: first at the last frame (propagated
backwards), then at every intermediate frame in order (propagated both
ways). New nodes are chosen by farthest-point sampling over pixels whose
distance to the nearest node is at least ``eps_d``. Finally, positions with
low tracker confidence are replaced by the inverse-distance weighted
displacement of reliable neighbours.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .tracking import TrackerQuery

__all__ = [
    "ProxyLayer",
    "PropagationConfig",
    "propagate_seeds",
    "find_non_proxy",
    "supplement",
    "propagate_bidirectional",
    "occlusion_fallback",
    "apply_occlusion_fallback",
    "build_layer",
    "coverage_distances",
]

log = logging.getLogger(__name__)

SCHEDULES = ("full", "first", "first_last")


@dataclass
class PropagationConfig:
    eps_d: float = 30.0
    k_nn: int = 8
    confidence_threshold: float = 0.2
    max_nodes: int = 20000
    schedule: str = "full"  # "first" and "first_last" are the F / F&L ablations

    def __post_init__(self):
        if self.eps_d <= 0:
            raise ValueError("eps_d must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


@dataclass
class ProxyLayer:
    """Trajectories of one layer's nodes.

    ``positions[k, j]`` is node ``k`` at absolute frame ``t_start + j``.
    """

    layer_id: int
    t_start: int
    t_end: int
    positions: np.ndarray  # (g, n, 2)
    round_tag: np.ndarray  # (g,)
    source_frame: np.ndarray  # (g,)
    confidence: np.ndarray  # (g, n)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.t_end - self.t_start + 1
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, n, 2)
        g = len(self.positions)
        self.round_tag = np.asarray(self.round_tag, dtype=np.int64).reshape(g)
        self.source_frame = np.asarray(self.source_frame, dtype=np.int64).reshape(g)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(g, n)

    @property
    def n_nodes(self):
        return len(self.positions)

    @property
    def n_frames(self):
        return self.t_end - self.t_start + 1

    @property
    def n_rounds(self):
        """Number of supplementation rounds that added nodes (k)."""
        return int(self.round_tag.max()) if self.n_nodes else 0

    def alive(self, t):
        return self.t_start <= t <= self.t_end

    def at(self, t):
        """(g, 2) node positions at absolute frame ``t``."""
        return self.positions[:, t - self.t_start]

    def at_time(self, t):
        """Positions at fractional time ``t``, linear between neighbouring frames."""
        t0 = int(np.floor(t))
        t1 = min(t0 + 1, self.t_end)
        a = t - t0
        if a == 0.0 or t1 == t0:
            return self.at(t0)
        return (1.0 - a) * self.at(t0) + a * self.at(t1)


def _chain(points, t_from, t_to, tracker, video, layer_id):
    """Frame-to-frame tracking; returns positions and min-accumulated confidence."""
    step = 1 if t_to >= t_from else -1
    frames = list(range(t_from, t_to + step, step))
    pos = np.zeros((len(points), len(frames), 2))
    conf = np.ones((len(points), len(frames)))
    pos[:, 0] = points
    for j in range(1, len(frames)):
        res = tracker.track(TrackerQuery(frames[j - 1], frames[j], pos[:, j - 1], layer_id), video)
        pos[:, j] = res.points
        conf[:, j] = np.minimum(conf[:, j - 1], res.confidence)
    if step < 0:
        pos = pos[:, ::-1]
        conf = conf[:, ::-1]
    return pos, conf


def propagate_seeds(seeds, tracker, video, layer_id, t_end):
    """Round-0 trajectories from ``seeds.frame`` to ``t_end``."""
    pts = seeds.points if hasattr(seeds, "points") else np.asarray(seeds, dtype=np.float64)
    t_start = seeds.frame
    pos, conf = _chain(pts, t_start, t_end, tracker, video, layer_id)
    g = len(pts)
    return ProxyLayer(layer_id, t_start, t_end, pos, np.zeros(g), np.full(g, t_start), conf)


def _pixel_grid(shape):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)


def coverage_distances(mask, node_positions):
    """Distance from each in-mask pixel (row-major) to its nearest node."""
    mask = np.asarray(mask, dtype=bool)
    pix = _pixel_grid(mask.shape)[mask.ravel()]
    nodes = np.asarray(node_positions, dtype=np.float64).reshape(-1, 2)
    if len(nodes) == 0:
        return pix, np.full(len(pix), np.inf)
    d, _ = cKDTree(nodes).query(pix)
    return pix, d


def find_non_proxy(mask, node_positions, eps_d):
    """Distance raster plus the in-mask pixels with distance >= ``eps_d``.

    Returns
    -------
    dist : (h, w) array
        Exact Euclidean distance from every pixel centre to the nearest node
        (``inf`` when there are no nodes).
    non_proxy : (k, 2) array
        ``(x, y)`` of in-mask pixels with ``dist >= eps_d``, row-major order.
    """
    if eps_d <= 0:
        raise ValueError("eps_d must be positive")
    mask = np.asarray(mask, dtype=bool)
    pix = _pixel_grid(mask.shape)
    nodes = np.asarray(node_positions, dtype=np.float64).reshape(-1, 2)
    if len(nodes):
        d, _ = cKDTree(nodes).query(pix)
    else:
        d = np.full(len(pix), np.inf)
    dist = d.reshape(mask.shape)
    sel = mask.ravel() & (d >= eps_d)
    return dist, pix[sel]


def supplement(mask, node_positions, eps_d, limit=None):
    """Farthest-point sampling until every in-mask pixel is within ``eps_d``.

    Returns the new ``(x, y)`` nodes in insertion order. Ties in distance are
    broken by row-major pixel order.
    """
    pix, d = coverage_distances(mask, node_positions)
    d = d.copy()
    new = []
    while len(d) and (limit is None or len(new) < limit):
        k = int(np.argmax(d))
        if not d[k] >= eps_d:
            break
        p = pix[k]
        new.append(p.copy())
        d = np.minimum(d, np.hypot(pix[:, 0] - p[0], pix[:, 1] - p[1]))
    return np.array(new, dtype=np.float64).reshape(-1, 2)


def propagate_bidirectional(new_nodes, creation_frame, tracker, video, layer):
    """Trajectories over the layer lifetime for nodes created at ``creation_frame``.

    Returns
    -------
    positions : (m, n, 2) array
    confidence : (m, n) array
    """
    pts = np.asarray(new_nodes, dtype=np.float64).reshape(-1, 2)
    n = layer.t_end - layer.t_start + 1
    pos = np.zeros((len(pts), n, 2))
    conf = np.zeros((len(pts), n))
    c = creation_frame - layer.t_start
    back, back_c = _chain(pts, creation_frame, layer.t_start, tracker, video, layer.layer_id)
    pos[:, :c + 1] = back
    conf[:, :c + 1] = back_c
    if creation_frame < layer.t_end:
        fwd, fwd_c = _chain(pts, creation_frame, layer.t_end, tracker, video, layer.layer_id)
        pos[:, c:] = fwd
        conf[:, c:] = fwd_c
    pos[:, c] = pts
    conf[:, c] = 1.0
    return pos, conf


def _fallback_one(positions, confidence, source_frame, t_start, node, frame, k_nn, threshold):
    s = source_frame[node] - t_start
    j = frame - t_start
    ok = (confidence[:, s] >= threshold) & (confidence[:, j] >= threshold)
    ok[node] = False
    cand = np.flatnonzero(ok)
    if len(cand) < k_nn:
        return None
    anchor = positions[node, s]
    dist = np.hypot(*(positions[cand, s] - anchor).T)
    order = np.argsort(dist, kind="stable")[:k_nn]
    nb = cand[order]
    w = 1.0 / np.maximum(dist[order], 1e-9)
    w /= w.sum()
    disp = positions[nb, j] - positions[nb, s]
    return anchor + (w[:, None] * disp).sum(axis=0)


def occlusion_fallback(layer, node_index, frame, k_nn=8, threshold=0.2):
    """Neighbour-weighted replacement position for one unreliable entry.

    The node's anchor (its position at its source frame) is displaced by the
    inverse-distance weighted mean displacement of its ``k_nn`` nearest
    neighbours that are reliable at both the source frame and ``frame``.
    Returns the raw tracked position when too few such neighbours exist.
    """
    p = _fallback_one(layer.positions, layer.confidence, layer.source_frame, layer.t_start,
                      node_index, frame, k_nn, threshold)
    if p is None:
        return layer.at(frame)[node_index].copy()
    return p


def apply_occlusion_fallback(positions, confidence, source_frame, t_start, k_nn=8, threshold=0.2):
    """Replace every low-confidence entry; returns (positions, used, failed)."""
    out = positions.copy()
    used = failed = 0
    low = np.argwhere(confidence < threshold)
    for node, j in low:
        p = _fallback_one(positions, confidence, source_frame, t_start, int(node), int(j) + t_start,
                          k_nn, threshold)
        if p is None:
            failed += 1
        else:
            out[node, j] = p
            used += 1
    return out, used, failed


def build_layer(seeds, tracker, video, config=None, track=None, seed_truncated=False):
    """Run the full propagation schedule for one layer.

    Parameters
    ----------
    seeds : SeedNodes
        Seed points at the layer's first frame.
    tracker : Tracker
    video : FrameSequence
    config : PropagationConfig
    track : LayerMaskTrack
        The layer's masks; defaults to the video layer whose first frame
        matches the seeds.
    seed_truncated : bool
        Set when the seed budget cut interior sampling short; the first frame
        is then topped up before the regular schedule.
    """
    config = config or PropagationConfig()
    if track is None:
        track = next(l for l in video.layers if l.t_start == seeds.frame)
    t_start, t_end = track.t_start, track.t_end
    layer = propagate_seeds(seeds, tracker, video, track.layer_id, t_end)
    pos = [layer.positions]
    conf = [layer.confidence]
    tags = [layer.round_tag]
    src = [layer.source_frame]
    count = layer.n_nodes
    round_counts = [count]
    uncovered = []
    round_id = 0

    def current_at(t):
        return np.concatenate([p[:, t - t_start] for p in pos])

    def add_round(t, new):
        nonlocal count, round_id
        round_id += 1
        p, c = propagate_bidirectional(new, t, tracker, video, layer)
        pos.append(p)
        conf.append(c)
        tags.append(np.full(len(new), round_id))
        src.append(np.full(len(new), t))
        count += len(new)
        round_counts.append(len(new))
        log.debug("layer %d: round %d added %d nodes at frame %d", track.layer_id, round_id, len(new), t)

    frames = []
    if seed_truncated:
        frames.append(t_start)
    if config.schedule in ("full", "first_last") and t_end > t_start:
        frames.append(t_end)
    if config.schedule == "full":
        frames.extend(range(t_start + 1, t_end))
    for t in frames:
        budget = config.max_nodes - count
        new = supplement(track.mask_at(t), current_at(t), config.eps_d, limit=max(budget, 0) + 1)
        if len(new) == 0:
            continue
        if len(new) > budget:
            uncovered.append(t)
            new = new[:budget]
            if len(new) == 0:
                continue
        add_round(t, new)

    positions = np.concatenate(pos)
    confidence = np.concatenate(conf)
    source = np.concatenate(src)
    fixed, used, failed = apply_occlusion_fallback(
        positions, confidence, source, t_start, config.k_nn, config.confidence_threshold)
    out = ProxyLayer(track.layer_id, t_start, t_end, fixed, np.concatenate(tags), source, confidence)
    max_cov = []
    for t in range(t_start, t_end + 1):
        _, d = coverage_distances(track.mask_at(t), out.at(t))
        max_cov.append(float(d.max()) if len(d) else 0.0)
    out.diagnostics = {
        "layer_id": int(track.layer_id),
        "nodes_per_round": [int(c) for c in round_counts],
        "rounds": int(round_id),
        "max_coverage_distance": max_cov,
        "fallback_used": int(used),
        "fallback_failed": int(failed),
        "uncovered_frames": [int(t) for t in uncovered],
    }
    if uncovered:
        log.warning("layer %d: max_nodes=%d reached; frames %s not fully covered",
                    track.layer_id, config.max_nodes, uncovered)
    return out
