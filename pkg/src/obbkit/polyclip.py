"""Exact intersection and IoU of rotated boxes by convex polygon clipping."""
from __future__ import annotations

import math

import numpy as np

# A point this close to a clip edge (perpendicular distance) counts as inside.
INSIDE_TOL = 1e-12


def _empty():
    return np.zeros((0, 2))


def intersect(a, b):
    """Sutherland-Hodgman clip of convex CCW polygon ``a`` by convex CCW ``b``.

    Returns the intersection polygon as an (n, 2) array, n <= 8 for two quads;
    an empty (0, 2) array when the polygons do not overlap.
    """
    out = _clip(_as_tuples(a), _as_tuples(b))
    if not out:
        return _empty()
    return _dedupe(out)


def _as_tuples(poly):
    return [(float(x), float(y)) for x, y in np.asarray(poly, dtype=float).reshape(-1, 2)]


def _clip(subject, clip):
    out = subject
    n = len(clip)
    for i in range(n):
        if not out:
            return []
        x1, y1 = clip[i]
        x2, y2 = clip[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        elen = math.hypot(ex, ey)
        if elen == 0.0:
            continue
        src, out = out, []
        sx, sy = src[-1]
        ds = (ex * (sy - y1) - ey * (sx - x1)) / elen
        for px, py in src:
            de = (ex * (py - y1) - ey * (px - x1)) / elen
            e_in = de >= -INSIDE_TOL
            if e_in != (ds >= -INSIDE_TOL):
                t = ds / (ds - de)
                out.append((sx + t * (px - sx), sy + t * (py - sy)))
            if e_in:
                out.append((px, py))
            sx, sy, ds = px, py, de
    return out


def _dedupe(pts):
    scale = max(1.0, max(max(abs(x), abs(y)) for x, y in pts))
    tol = 1e-12 * scale
    keep = []
    for p in pts:
        if keep and abs(p[0] - keep[-1][0]) <= tol and abs(p[1] - keep[-1][1]) <= tol:
            continue
        keep.append(p)
    if len(keep) > 1 and abs(keep[0][0] - keep[-1][0]) <= tol and abs(keep[0][1] - keep[-1][1]) <= tol:
        keep.pop()
    return np.array(keep, dtype=float).reshape(-1, 2)


def _shoelace(pts):
    x0, y0 = pts[0]
    s = 0.0
    for i in range(1, len(pts) - 1):
        ax, ay = pts[i][0] - x0, pts[i][1] - y0
        bx, by = pts[i + 1][0] - x0, pts[i + 1][1] - y0
        s += ax * by - ay * bx
    return 0.5 * s


def area(poly):
    """Shoelace area; 0 for fewer than three vertices."""
    p = np.asarray(poly, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        return 0.0
    # shift to the first vertex to reduce cancellation on far-away polygons
    d = p - p[0]
    x, y = d[:, 0], d[:, 1]
    s = 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    return abs(s)


def _corner_tuples(b):
    s, c = math.sin(b.theta), math.cos(b.theta)
    hw, hh = 0.5 * b.w, 0.5 * b.h
    # same vertex order as geom.corners
    out = []
    for sh, sw in ((1, -1), (1, 1), (-1, 1), (-1, -1)):
        out.append((b.x + sh * hh * c + sw * hw * s, b.y - sh * hh * s + sw * hw * c))
    return out


def intersection_area(a, b):
    pts = _clip(_corner_tuples(a), _corner_tuples(b))
    if len(pts) < 3:
        return 0.0
    return abs(_shoelace(pts))


def iou_exact(a, b):
    """Exact IoU of two OBBs.

    The pair is put in a fixed order before clipping so that
    ``iou_exact(a, b) == iou_exact(b, a)`` holds bit for bit.
    """
    if b.as_tuple() < a.as_tuple():
        a, b = b, a
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))
