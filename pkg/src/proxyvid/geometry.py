"""
Planar Delaunay triangulation and barycentric point location.

The triangulator is an incremental Bowyer-Watson insertion. Instead of a
finite super-triangle it closes the mesh with "ghost" triangles that share a
vertex at infinity, which keeps the convex hull exact even for nearly
collinear hull points. A final Lawson pass resolves cocircular ties
deterministically: of the two diagonals of a cocircular quad, the one that
touches the lowest vertex index wins.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import DegeneratePointSetError, ZeroAreaTriangleError

__all__ = [
    "Point2",
    "BarycentricCoords",
    "Triangulation",
    "delaunay",
    "barycentric",
    "locate",
    "nearest_triangle_extension",
    "locate_many",
    "extend_many",
    "interpolation_weights",
    "DEGENERACY_TOL",
    "DUPLICATE_TOL",
]

DEGENERACY_TOL = 1e-12  # px^2, on |signed area|
DUPLICATE_TOL = 1e-9  # px
INSIDE_TOL = 1e-9  # barycentric slack for boundary points
_GHOST = -1


class Point2(NamedTuple):
    x: float
    y: float


class BarycentricCoords(NamedTuple):
    lambda1: float
    lambda2: float
    lambda3: float
    triangle_index: int

    @property
    def weights(self):
        return np.array([self.lambda1, self.lambda2, self.lambda3])


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """Positive when d lies strictly inside the circumcircle of CCW (a, b, c)."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = alift * (bdx * cdy - cdx * bdy)
    t2 = blift * (cdx * ady - adx * cdy)
    t3 = clift * (adx * bdy - bdx * ady)
    det = t1 + t2 + t3
    mag = abs(alift) * (abs(bdx * cdy) + abs(cdx * bdy)) \
        + abs(blift) * (abs(cdx * ady) + abs(adx * cdy)) \
        + abs(clift) * (abs(adx * bdy) + abs(bdx * ady))
    return det, mag


class Triangulation:
    """Immutable triangle mesh over a 2-D vertex set.

    Parameters
    ----------
    vertices : (n, 2) array
        Vertex coordinates in pixels.
    triangles : (m, 3) int array
        Counter-clockwise vertex-index triples.
    """

    def __init__(self, vertices, triangles):
        self.vertices = np.array(vertices, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False
        self._grid = None
        self._boundary = None

    def __len__(self):
        return len(self.triangles)

    def __repr__(self):
        return f"Triangulation(n_vertices={len(self.vertices)}, n_triangles={len(self.triangles)})"

    @property
    def corners(self):
        """(m, 3, 2) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def signed_areas(self):
        c = self.corners
        return 0.5 * _orient(c[:, 0, 0], c[:, 0, 1], c[:, 1, 0], c[:, 1, 1], c[:, 2, 0], c[:, 2, 1])

    # -- locator ---------------------------------------------------------
    def _build_grid(self):
        m = len(self.triangles)
        n_cells = max(1, math.ceil(math.sqrt(m)))
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        cell = span / n_cells
        c = self.corners
        tmin = np.floor((c.min(axis=1) - lo) / cell).astype(int).clip(0, n_cells - 1)
        tmax = np.floor((c.max(axis=1) - lo) / cell).astype(int).clip(0, n_cells - 1)
        buckets = [[[] for _ in range(n_cells)] for _ in range(n_cells)]
        for t in range(m):
            for gx in range(tmin[t, 0], tmax[t, 0] + 1):
                for gy in range(tmin[t, 1], tmax[t, 1] + 1):
                    buckets[gy][gx].append(t)
        self._grid = (lo, hi, cell, n_cells, buckets)

    def candidates(self, x, y):
        """Triangle indices whose bounding box shares the grid cell of (x, y)."""
        if self._grid is None:
            self._build_grid()
        lo, hi, cell, n_cells, buckets = self._grid
        eps = 1e-9 * max(1.0, float(np.abs(hi).max()), float(np.abs(lo).max()))
        if x < lo[0] - eps or y < lo[1] - eps or x > hi[0] + eps or y > hi[1] + eps:
            return []
        gx = min(max(int((x - lo[0]) // cell[0]), 0), n_cells - 1)
        gy = min(max(int((y - lo[1]) // cell[1]), 0), n_cells - 1)
        return buckets[gy][gx]

    def boundary_edges(self):
        """Hull edges as (k, 2) vertex pairs plus the owning triangle index, sorted by triangle."""
        if self._boundary is None:
            count = {}
            owner = {}
            for t, (a, b, c) in enumerate(self.triangles.tolist()):
                for u, v in ((a, b), (b, c), (c, a)):
                    key = (u, v) if u < v else (v, u)
                    count[key] = count.get(key, 0) + 1
                    owner.setdefault(key, (t, u, v))
            edges = sorted(owner[k] for k, n in count.items() if n == 1)
            arr = np.array(edges, dtype=np.int64).reshape(-1, 3)
            self._boundary = (arr[:, 1:], arr[:, 0])
        return self._boundary


# -- construction ----------------------------------------------------------

def _check_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain NaN or Inf")
    return pts


def _bowyer_watson(pts):
    n = len(pts)
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()

    # seed triangle: points 0 and 1, then the first point not collinear with them
    span = float(np.ptp(pts, axis=0).max()) or 1.0
    i0, i1 = 0, 1
    i2 = -1
    for k in range(2, n):
        o = _orient(xs[i0], ys[i0], xs[i1], ys[i1], xs[k], ys[k])
        if abs(o) > 2 * DEGENERACY_TOL * max(1.0, span):
            i2 = k
            break
    if i2 < 0:
        raise DegeneratePointSetError("degenerate point set: all points are collinear")
    if _orient(xs[i0], ys[i0], xs[i1], ys[i1], xs[i2], ys[i2]) < 0:
        i1, i2 = i2, i1

    tris = []  # [a, b, c]; a ghost vertex always sits in the last slot
    alive = []
    edge = {}  # directed edge (u, v) -> triangle holding it in CCW order

    def add(a, b, c):
        t = len(tris)
        tris.append((a, b, c))
        alive.append(True)
        edge[(a, b)] = t
        edge[(b, c)] = t
        edge[(c, a)] = t
        return t

    def kill(t):
        a, b, c = tris[t]
        alive[t] = False
        for key in ((a, b), (b, c), (c, a)):
            if edge.get(key) == t:
                del edge[key]

    def conflict(t, px, py):
        a, b, c = tris[t]
        if c == _GHOST:
            o = _orient(xs[a], ys[a], xs[b], ys[b], px, py)
            if o > 0:
                return True
            if o < 0:
                return False
            dot = (px - xs[a]) * (xs[b] - xs[a]) + (py - ys[a]) * (ys[b] - ys[a])
            length2 = (xs[b] - xs[a]) ** 2 + (ys[b] - ys[a]) ** 2
            return 0 < dot < length2
        det, _ = _incircle(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c], px, py)
        return det > 0

    add(i0, i1, i2)
    add(i1, i0, _GHOST)
    add(i2, i1, _GHOST)
    add(i0, i2, _GHOST)
    last = 0

    def walk(start, px, py):
        t = start
        for _ in range(4 * len(tris) + 16):
            a, b, c = tris[t]
            if c == _GHOST:
                return t
            moved = False
            for u, v in ((a, b), (b, c), (c, a)):
                if _orient(xs[u], ys[u], xs[v], ys[v], px, py) < 0:
                    t = edge[(v, u)]
                    moved = True
                    break
            if not moved:
                return t
        for t, ok in enumerate(alive):  # walk cycled on a near-degenerate mesh
            if ok and conflict(t, px, py):
                return t
        raise DegeneratePointSetError("point location failed")

    for p in range(n):
        if p in (i0, i1, i2):
            continue
        px, py = xs[p], ys[p]
        t0 = walk(last, px, py)
        if not conflict(t0, px, py):
            for t, ok in enumerate(alive):
                if ok and conflict(t, px, py):
                    t0 = t
                    break
        cavity = {t0}
        stack = [t0]
        boundary = []
        while stack:
            t = stack.pop()
            a, b, c = tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = edge[(v, u)]
                if nb in cavity:
                    continue
                if conflict(nb, px, py):
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    boundary.append((u, v))
        for t in sorted(cavity):
            kill(t)
        for u, v in boundary:
            if u == _GHOST:
                t = add(v, p, _GHOST)
            elif v == _GHOST:
                t = add(p, u, _GHOST)
            else:
                t = add(u, v, p)
                last = t
    return [tris[t] for t in range(len(tris)) if alive[t] and tris[t][2] != _GHOST]


def _legalize(pts, tris):
    """Lawson flips: fix any residual non-Delaunay edge and apply the tie rule."""
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    tris = [list(t) for t in tris]
    edge = {}
    for i, (a, b, c) in enumerate(tris):
        edge[(a, b)] = i
        edge[(b, c)] = i
        edge[(c, a)] = i

    queue = sorted({(min(u, v), max(u, v)) for u, v in edge if (v, u) in edge})
    pending = set(queue)
    budget = 50 * len(tris) + 100
    while queue and budget > 0:
        budget -= 1
        key = queue.pop()
        pending.discard(key)
        u, v = key
        if (u, v) not in edge or (v, u) not in edge:
            continue
        t1, t2 = edge[(u, v)], edge[(v, u)]
        # t1 holds u->v, t2 holds v->u; c and d are the opposite vertices
        a, b = u, v
        c = next(w for w in tris[t1] if w != a and w != b)
        d = next(w for w in tris[t2] if w != a and w != b)
        det, mag = _incircle(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c], xs[d], ys[d])
        # tris[t1] is CCW and contains a->b, so (a, b, c) is CCW
        tol = 1e-10 * mag
        if det > tol:
            flip = True
        elif det >= -tol:
            flip = min(c, d) < min(a, b)
        else:
            flip = False
        if not flip:
            continue
        if _orient(xs[a], ys[a], xs[d], ys[d], xs[c], ys[c]) <= 0:
            continue
        if _orient(xs[d], ys[d], xs[b], ys[b], xs[c], ys[c]) <= 0:
            continue
        for t in (t1, t2):
            p, q, r = tris[t]
            for e in ((p, q), (q, r), (r, p)):
                del edge[e]
        tris[t1] = [a, d, c]
        tris[t2] = [d, b, c]
        for t in (t1, t2):
            p, q, r = tris[t]
            for e in ((p, q), (q, r), (r, p)):
                edge[e] = t
        for e in ((a, d), (d, b), (b, c), (c, a)):
            k = (min(e), max(e))
            if k not in pending:
                pending.add(k)
                queue.append(k)
    return tris


def _canonical(tris):
    out = []
    for a, b, c in tris:
        r = min(range(3), key=lambda i: (a, b, c)[i])
        out.append(tuple((a, b, c)[(r + i) % 3] for i in range(3)))
    out.sort()
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def delaunay(points):
    """Delaunay triangulation of a planar point set.

    Parameters
    ----------
    points : (n, 2) array_like
        Distinct points; coincident points (within 1e-9 px) must be merged by
        the caller beforehand.

    Returns
    -------
    Triangulation
        Counter-clockwise triangles in canonical (sorted) order. The result is
        a pure function of the input ordering.

    Raises
    ------
    DegeneratePointSetError
        Fewer than three points, duplicates, or all points collinear.
    """
    pts = _check_points(points)
    if len(pts) < 3:
        raise DegeneratePointSetError("degenerate point set: need at least 3 points")
    if cKDTree(pts).query_pairs(DUPLICATE_TOL):
        raise DegeneratePointSetError("degenerate point set: coincident points")
    tris = _bowyer_watson(pts)
    tris = _legalize(pts, tris)
    tri = Triangulation(pts, _canonical(tris))
    areas = np.abs(tri.signed_areas())
    if len(tri) == 0 or np.any(areas < DEGENERACY_TOL):
        keep = areas >= DEGENERACY_TOL
        tri = Triangulation(pts, tri.triangles[keep])
        if len(tri) == 0:
            raise DegeneratePointSetError("degenerate point set")
    return tri


# -- barycentric queries ----------------------------------------------------

def _bary(px, py, ax, ay, bx, by, cx, cy):
    v0x, v0y = bx - ax, by - ay
    v1x, v1y = cx - ax, cy - ay
    v2x, v2y = px - ax, py - ay
    det = v0x * v1y - v1x * v0y
    l2 = (v2x * v1y - v1x * v2y) / det
    l3 = (v0x * v2y - v2x * v0y) / det
    return 1.0 - l2 - l3, l2, l3


def barycentric(p, tri_index, tri):
    """Barycentric coordinates of ``p`` with respect to one triangle.

    Raises
    ------
    ZeroAreaTriangleError
        If the triangle's signed area is below the degeneracy tolerance.
    """
    (ax, ay), (bx, by), (cx, cy) = tri.vertices[tri.triangles[tri_index]]
    area = 0.5 * _orient(ax, ay, bx, by, cx, cy)
    if abs(area) < DEGENERACY_TOL:
        raise ZeroAreaTriangleError(f"zero-area triangle {tri_index}")
    l1, l2, l3 = _bary(float(p[0]), float(p[1]), ax, ay, bx, by, cx, cy)
    return BarycentricCoords(l1, l2, l3, int(tri_index))


def locate(p, tri):
    """Find the triangle containing ``p``.

    Returns
    -------
    BarycentricCoords or None
        ``None`` when ``p`` lies outside the convex hull. Points on a shared
        edge go to the lowest-index incident triangle.
    """
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("query point is not finite")
    for t in sorted(tri.candidates(x, y)):
        bc = barycentric((x, y), t, tri)
        if min(bc.lambda1, bc.lambda2, bc.lambda3) >= -INSIDE_TOL:
            return bc
    return None


def _closest_on_segments(p, seg_a, seg_b):
    d = seg_b - seg_a
    len2 = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", p[None, :] - seg_a, d) / np.where(len2 > 0, len2, 1.0)
    q = seg_a + t[:, None] * d
    q[t <= 0] = seg_a[t <= 0]
    q[t >= 1] = seg_b[t >= 1]
    return q


def _clamped(bc):
    w = np.clip(np.array([bc.lambda1, bc.lambda2, bc.lambda3]), 0.0, 1.0)
    w /= w.sum()
    return BarycentricCoords(float(w[0]), float(w[1]), float(w[2]), bc.triangle_index)


def nearest_triangle_extension(p, tri):
    """Like :func:`locate`, but never returns Outside.

    Points outside the hull are projected onto the nearest hull edge; the
    returned weights are those of the projected point, clamped to [0, 1] and
    renormalized.
    """
    found = locate(p, tri)
    if found is not None:
        return found
    edges, owners = tri.boundary_edges()
    q = np.array([float(p[0]), float(p[1])])
    closest = _closest_on_segments(q, tri.vertices[edges[:, 0]], tri.vertices[edges[:, 1]])
    dist = np.hypot(*(closest - q).T)
    k = int(np.argmin(dist))  # edges are sorted by owner, so ties pick the lowest triangle
    return _clamped(barycentric(closest[k], int(owners[k]), tri))


# -- vectorized queries used by the renderer and the trainer ----------------

def _bary_many(pts, corners):
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    v0 = b - a
    v1 = c - a
    v2 = pts - a
    det = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
    l2 = (v2[:, 0] * v1[:, 1] - v1[:, 0] * v2[:, 1]) / det
    l3 = (v0[:, 0] * v2[:, 1] - v2[:, 0] * v0[:, 1]) / det
    return np.stack([1.0 - l2 - l3, l2, l3], axis=1)


def locate_many(points, tri):
    """Vectorized :func:`locate`.

    Returns
    -------
    tri_index : (n,) int array
        Containing triangle, or -1 outside the hull.
    weights : (n, 3) array
        Barycentric weights (zeros where outside).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    out_t = np.full(n, -1, dtype=np.int64)
    out_w = np.zeros((n, 3))
    if n == 0 or len(tri) == 0:
        return out_t, out_w
    order = np.argsort(pts[:, 0], kind="stable")
    sx = pts[order, 0]
    corners = tri.corners
    cmin = corners.min(axis=1)
    cmax = corners.max(axis=1)
    slack = 1e-9 * max(1.0, float(np.abs(tri.vertices).max()))
    lo_idx = np.searchsorted(sx, cmin[:, 0] - slack, side="left")
    hi_idx = np.searchsorted(sx, cmax[:, 0] + slack, side="right")
    for t in range(len(tri)):
        if lo_idx[t] >= hi_idx[t]:
            continue
        cand = order[lo_idx[t]:hi_idx[t]]
        cy = pts[cand, 1]
        cand = cand[(cy >= cmin[t, 1] - slack) & (cy <= cmax[t, 1] + slack)]
        cand = cand[out_t[cand] < 0]
        if len(cand) == 0:
            continue
        w = _bary_many(pts[cand], np.broadcast_to(corners[t], (len(cand), 3, 2)))
        inside = w.min(axis=1) >= -INSIDE_TOL
        hit = cand[inside]
        out_t[hit] = t
        out_w[hit] = w[inside]
    return out_t, out_w


def extend_many(points, tri):
    """Vectorized :func:`nearest_triangle_extension` for arbitrary points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    t_idx, w = locate_many(pts, tri)
    outside = np.flatnonzero(t_idx < 0)
    if len(outside) == 0:
        return t_idx, w
    edges, owners = tri.boundary_edges()
    a = tri.vertices[edges[:, 0]]
    b = tri.vertices[edges[:, 1]]
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    chunk = max(1, 2_000_000 // max(1, len(edges)))
    for s in range(0, len(outside), chunk):
        idx = outside[s:s + chunk]
        q = pts[idx]
        rel = q[:, None, :] - a[None, :, :]
        tt = np.einsum("nej,ej->ne", rel, d) / np.where(len2 > 0, len2, 1.0)
        proj = a[None] + tt[..., None] * d[None]
        proj = np.where((tt <= 0)[..., None], a[None], proj)
        proj = np.where((tt >= 1)[..., None], b[None], proj)
        dist2 = ((proj - q[:, None, :]) ** 2).sum(axis=2)
        k = np.argmin(dist2, axis=1)
        closest = proj[np.arange(len(idx)), k]
        tris = owners[k]
        ww = _bary_many(closest, tri.corners[tris])
        ww = np.clip(ww, 0.0, 1.0)
        ww /= ww.sum(axis=1, keepdims=True)
        t_idx[idx] = tris
        w[idx] = ww
    return t_idx, w


def interpolation_weights(points, tri, extend=True):
    """Per-point vertex ids and weights for barycentric interpolation.

    Returns
    -------
    vertex_ids : (n, 3) int array
        Indices into ``tri.vertices`` (-1 rows where outside and not extended).
    weights : (n, 3) array
    """
    t_idx, w = (extend_many if extend else locate_many)(points, tri)
    ids = np.full((len(t_idx), 3), -1, dtype=np.int64)
    ok = t_idx >= 0
    ids[ok] = tri.triangles[t_idx[ok]]
    return ids, w
