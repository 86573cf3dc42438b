"""
Seed proxy nodes for one layer: contour control points plus interior points
picked greedily by Sobel gradient magnitude.

Coordinates follow the pixel convention used everywhere in the package:
``x`` is the column index, ``y`` the row index, pixel centres at integers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import EmptyLayerError
from .video import LayerMaskTrack

__all__ = [
    "LayerMaskTrack",
    "SeedNodes",
    "VectorizerConfig",
    "trace_contours",
    "simplify_polyline",
    "sobel_gradient",
    "sample_interior",
    "vectorize_layer",
    "to_gray",
    "polygon_signed_area",
]

# Moore neighbourhood in clockwise order (row-down image coordinates),
# starting from west: W, NW, N, NE, E, SE, S, SW as (drow, dcol)
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass
class SeedNodes:
    edge_points: np.ndarray  # (k, 2)
    interior_points: np.ndarray  # (m, 2)
    frame: int

    @property
    def points(self):
        return np.concatenate([self.edge_points.reshape(-1, 2), self.interior_points.reshape(-1, 2)])

    def __len__(self):
        return len(self.edge_points) + len(self.interior_points)


@dataclass
class VectorizerConfig:
    simplify_tol: float = 2.0
    spacing: float = 15.0  # r_s
    max_interior: int | None = None
    max_seed_nodes: int = 2000
    min_area: int = 16


def to_gray(image):
    """Luma (0.299 R + 0.587 G + 0.114 B); 2-D input passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def polygon_signed_area(poly):
    """Shoelace area in (x, y) coordinates; positive means counter-clockwise."""
    p = np.asarray(poly, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _moore_trace(mask, start, back):
    """Trace one boundary with Moore-neighbour tracing and Jacob's stopping rule."""
    h, w = mask.shape

    def inside(r, c):
        return 0 <= r < h and 0 <= c < w and mask[r, c]

    path = [start]
    cur = start
    d_back = _MOORE.index((back[0] - cur[0], back[1] - cur[1]))
    first_state = None
    for _ in range(8 * mask.size + 8):
        nxt = None
        for k in range(1, 9):
            d = (d_back + k) % 8
            r, c = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if inside(r, c):
                prev = (d_back + k - 1) % 8
                nxt = (r, c)
                # new backtrack: the last background cell visited, seen from nxt
                br, bc = cur[0] + _MOORE[prev][0], cur[1] + _MOORE[prev][1]
                d_back = _MOORE.index((br - r, bc - c))
                break
        if nxt is None:  # isolated pixel
            return path
        state = (nxt, d_back)
        if first_state is None:
            first_state = state
        elif state == first_state:
            break
        cur = nxt
        path.append(cur)
    # the walk re-enters the start pixel last; drop the duplicate closing entries
    while len(path) > 1 and path[-1] == path[0]:
        path.pop()
    return path


def trace_contours(mask, min_area=16):
    """Boundary polylines of every connected component of ``mask``.

    Components use 8-connectivity and holes 4-connectivity. Each polyline is
    an (k, 2) array of boundary pixel centres ``(x, y)``; outer boundaries have
    positive shoelace area (counter-clockwise in x/y), hole boundaries
    negative. Components smaller than ``min_area`` pixels are skipped, as are
    holes smaller than ``min_area``.

    Raises
    ------
    EmptyLayerError
        If the mask has no set pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyLayerError("empty layer")
    labels, n = ndimage.label(mask, structure=_EIGHT)
    out = []
    for lab in range(1, n + 1):
        comp = labels == lab
        if comp.sum() < min_area:
            continue
        rows, cols = np.nonzero(comp)
        start = (int(rows[0]), int(cols[0]))
        path = _moore_trace(comp, start, (start[0], start[1] - 1))
        poly = np.array([(c, r) for r, c in path], dtype=np.float64)
        if len(poly) >= 3 and polygon_signed_area(poly) < 0:
            poly = np.concatenate([poly[:1], poly[:0:-1]])
        out.append(poly)

        # holes: background regions of the padded complement not touching the border
        filled = ndimage.binary_fill_holes(comp, structure=_FOUR)
        hole_lab, n_holes = ndimage.label(filled & ~comp, structure=_FOUR)
        for hl in range(1, n_holes + 1):
            hole = hole_lab == hl
            if hole.sum() < min_area:
                continue
            hr, hc = np.nonzero(hole)
            r0, c0 = int(hr[0]), int(hc[0])
            # the pixel left of the hole's first raster pixel belongs to the component
            path = _moore_trace(comp, (r0, c0 - 1), (r0, c0))
            poly = np.array([(c, r) for r, c in path], dtype=np.float64)
            if len(poly) >= 3 and polygon_signed_area(poly) > 0:
                poly = np.concatenate([poly[:1], poly[:0:-1]])
            out.append(poly)
    return out


def _seg_dist(p, a, b):
    d = b - a
    l2 = float(d @ d)
    if l2 == 0.0:
        return np.hypot(*(p - a).T)
    t = np.clip(((p - a) @ d) / l2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.hypot(*(p - proj).T)


def simplify_polyline(poly, tol=2.0):
    """Douglas-Peucker simplification of a closed polyline.

    The first vertex is always kept; the polyline is split there and at the
    vertex farthest from it, and each half is simplified independently.

    Returns
    -------
    (k, 2) array
        Subset of the input vertices, in input order.
    """
    p = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
    n = len(p)
    if n < 3:
        return p.copy()
    far = int(np.argmax(np.hypot(*(p - p[0]).T)))
    if far == 0:
        return p[:1].copy()
    keep = np.zeros(n + 1, dtype=bool)
    closed = np.concatenate([p, p[:1]])
    keep[0] = keep[far] = keep[n] = True
    stack = [(0, far), (far, n)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        d = _seg_dist(closed[i + 1:j], closed[i], closed[j])
        k = int(np.argmax(d))
        if d[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return p[keep[:n]]


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_gradient(image, mask=None):
    """Sobel gradient magnitude with edge-replicated borders.

    Parameters
    ----------
    image : (h, w) or (h, w, 3) array
        Colour input is converted to luma first.
    mask : (h, w) bool array, optional
        Pixels outside the mask are zeroed in the output.
    """
    gray = to_gray(image)
    if mask is not None and np.shape(mask) != gray.shape:
        raise ValueError("image and mask must have the same dimensions")
    pad = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    for dr in range(3):
        for dc in range(3):
            win = pad[dr:dr + h, dc:dc + w]
            gx += _SOBEL_X[dr, dc] * win
            gy += _SOBEL_X.T[dr, dc] * win
    mag = np.hypot(gx, gy)
    if mask is not None:
        mag[~np.asarray(mask, dtype=bool)] = 0.0
    return mag


def _block_disk(blocked, cx, cy, r):
    h, w = blocked.shape
    r0 = max(int(np.floor(cy - r)), 0)
    r1 = min(int(np.ceil(cy + r)), h - 1)
    c0 = max(int(np.floor(cx - r)), 0)
    c1 = min(int(np.ceil(cx + r)), w - 1)
    if r0 > r1 or c0 > c1:
        return
    yy, xx = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    blocked[r0:r1 + 1, c0:c1 + 1] |= (xx - cx) ** 2 + (yy - cy) ** 2 < r * r


def sample_interior(grad, mask, r_s, n_max, exclude=None):
    """Greedy interior sampling in descending gradient order.

    A pixel is accepted unless it is closer than ``r_s`` to an already
    accepted point or to any point in ``exclude`` (the edge control points).
    Equal magnitudes are visited in row-major order.

    Returns
    -------
    (k, 2) array of ``(x, y)`` points, ``k <= n_max``.
    """
    if r_s <= 0:
        raise ValueError("r_s must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    blocked = np.zeros(mask.shape, dtype=bool)
    if exclude is not None:
        for x, y in np.asarray(exclude, dtype=np.float64).reshape(-1, 2):
            _block_disk(blocked, x, y, r_s)
    flat = np.flatnonzero(mask.ravel())
    order = flat[np.argsort(-grad.ravel()[flat], kind="stable")]
    w = mask.shape[1]
    picked = []
    if n_max is None:
        n_max = mask.size
    for idx in order:
        if len(picked) >= n_max:
            break
        r, c = divmod(int(idx), w)
        if blocked[r, c]:
            continue
        picked.append((float(c), float(r)))
        _block_disk(blocked, c, r, r_s)
    return np.array(picked, dtype=np.float64).reshape(-1, 2)


def vectorize_layer(frame_image, mask, config=None, frame=0):
    """Seed nodes for a layer at its first frame.

    Edge points come from contour tracing plus Douglas-Peucker; interior
    points from Sobel-ranked greedy sampling. The total never exceeds
    ``config.max_seed_nodes`` (edge points take priority).
    """
    config = config or VectorizerConfig()
    mask = np.asarray(mask, dtype=bool)
    polys = trace_contours(mask, min_area=config.min_area)
    if not polys:
        raise EmptyLayerError("empty layer: no component above the minimum area")
    edge = [simplify_polyline(p, config.simplify_tol) for p in polys]
    edge = np.concatenate(edge) if edge else np.zeros((0, 2))
    edge = edge[: config.max_seed_nodes]
    budget = config.max_seed_nodes - len(edge)
    if config.max_interior is not None:
        budget = min(budget, config.max_interior)
    grad = sobel_gradient(frame_image, mask)
    interior = sample_interior(grad, mask, config.spacing, budget, exclude=edge)
    return SeedNodes(edge_points=edge, interior_points=interior, frame=frame)
