"""Oriented bounding box geometry.

Boxes are ``(x, y, w, h, theta)`` with ``w`` the long edge and ``theta`` the
angle (radians) between the long edge and the y-axis.  Unit axes:

    e_w = (sin theta,  cos theta)      along the long edge
    e_h = (cos theta, -sin theta)      along the short edge

Corners are ``c +/- (w/2) e_w +/- (h/2) e_h``.  ``(e_h, e_w)`` is a
right-handed frame, which is what makes :func:`corners` come out CCW.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidBoxError, InvalidRefinementError

PI = math.pi
HALF_PI = 0.5 * math.pi
SQUARE_RTOL = 1e-9

# Row-major 3x3 kernel grid as (dx, dy) cells, dy being the row.
KERNEL_GRID = np.array([(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=float)
_DIAGONAL_CELLS = (0, 2, 6, 8)
_EDGE_CELLS = (1, 3, 5, 7)
_CENTER_CELL = 4


@dataclass(frozen=True)
class OBB:
    """A rotated rectangle.  Only finiteness and positive extents are checked
    here; use :func:`canonicalize` to get the unique canonical form."""

    x: float
    y: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h", "theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.x, self.y, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box parameters: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box extents must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_degrees(cls, x, y, w, h, theta_deg):
        """Canonical box from an angle in degrees.

        The swap and wrap happen in degrees before conversion, so encodings
        differing by whole multiples of 90 degrees give identical boxes.
        """
        w, h, t = float(w), float(h), float(theta_deg)
        if math.isfinite(t) and w > 0 and h > 0:
            if w < h:
                w, h = h, w
                t += 90.0
            t = _wrap(t, 90.0 if _is_square(w, h) else 180.0)
        return canonicalize(x, y, w, h, math.radians(t))

    @property
    def theta_deg(self):
        return math.degrees(self.theta)

    @property
    def area(self):
        return self.w * self.h

    @property
    def center(self):
        return np.array([self.x, self.y])

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h, self.theta)

    def axes(self):
        """Return the unit vectors ``(e_w, e_h)``."""
        s, c = math.sin(self.theta), math.cos(self.theta)
        return np.array([s, c]), np.array([c, -s])

    def translated(self, dx, dy):
        return OBB(self.x + dx, self.y + dy, self.w, self.h, self.theta)

    def is_canonical(self):
        return self == canonicalize(*self.as_tuple())


@dataclass(frozen=True)
class Offset5:
    dx: float = 0.0
    dy: float = 0.0
    dw: float = 0.0
    dh: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self):
        vals = (self.dx, self.dy, self.dw, self.dh, self.dtheta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite offset: {vals}")


@dataclass(frozen=True)
class AcmPointSet:
    """Nine sampling points and their kernel offsets, in row-major kernel-cell
    order.  ``offsets`` are ``(dx, dy)`` pairs in feature-map units."""

    points: np.ndarray
    offsets: np.ndarray


def _is_square(w, h):
    return abs(w - h) <= SQUARE_RTOL * max(w, h)


def _wrap(theta, period):
    t = math.fmod(theta, period)
    if t < 0:
        t += period
    # fmod of a tiny negative number can round up to exactly `period`
    if t >= period:
        t = 0.0
    return t


def canonicalize(x, y, w, h, theta):
    """Return the canonical :class:`OBB` for a raw 5-parameter box.

    Swaps to ``w >= h`` (rotating by 90 degrees), then wraps theta into
    [0, pi), or [0, pi/2) for squares.
    """
    x, y, w, h, theta = float(x), float(y), float(w), float(h), float(theta)
    if not all(math.isfinite(v) for v in (x, y, w, h, theta)):
        raise InvalidBoxError(f"non-finite box parameters: {(x, y, w, h, theta)}")
    if w <= 0 or h <= 0:
        raise InvalidBoxError(f"box extents must be positive, got w={w}, h={h}")
    if w < h:
        w, h = h, w
        theta += HALF_PI
    period = HALF_PI if _is_square(w, h) else PI
    return OBB(x, y, w, h, _wrap(theta, period))


def as_obb(box):
    """Coerce an OBB or any 5-sequence into a canonical OBB."""
    if isinstance(box, OBB):
        return canonicalize(*box.as_tuple())
    return canonicalize(*box)


def corners(b):
    """Corners of ``b`` as a (4, 2) array in counter-clockwise order.

    The order starts at ``c + (h/2) e_h - (w/2) e_w``; every later consumer
    (ACM cell assignment, DOTA output) relies on it being fixed.
    """
    e_w, e_h = b.axes()
    c = b.center
    hw, hh = 0.5 * b.w, 0.5 * b.h
    return np.array([
        c + hh * e_h - hw * e_w,
        c + hh * e_h + hw * e_w,
        c - hh * e_h + hw * e_w,
        c - hh * e_h - hw * e_w,
    ])


def edge_midpoints(b):
    """Midpoints of the edges corners[i] -> corners[i+1]."""
    e_w, e_h = b.axes()
    c = b.center
    hw, hh = 0.5 * b.w, 0.5 * b.h
    return np.array([c + hh * e_h, c + hw * e_w, c - hh * e_h, c - hw * e_w])


def signed_area(pts):
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def as_quad(pts, allow_degenerate=False):
    """Validate four points as a convex quad and return them CCW as (4, 2)."""
    q = np.asarray(pts, dtype=float).reshape(-1, 2)
    if q.shape != (4, 2):
        raise DegenerateGeometryError(f"a quad needs exactly 4 points, got {len(q)}")
    if not np.all(np.isfinite(q)):
        raise InvalidBoxError("non-finite quad coordinates")
    a = signed_area(q)
    if a < 0:
        q = q[::-1].copy()
    if abs(a) == 0 and not allow_degenerate:
        raise DegenerateGeometryError("quad has zero area")
    d = np.roll(q, -1, axis=0) - q
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    scale = max(float(np.abs(q).max()), 1.0) ** 2
    if np.any(cross < -1e-12 * scale):
        raise DegenerateGeometryError("quad is not convex")
    return q


def convex_hull(pts):
    """Andrew's monotone chain; returns CCW hull without repeated endpoint."""
    p = sorted(set(map(tuple, np.asarray(pts, dtype=float).tolist())))
    if len(p) < 3:
        return np.array(p, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    for q in reversed(p):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def min_area_rect(pts):
    """Minimum-area enclosing rectangle of a point set, as a canonical OBB.

    Rotating calipers over the convex hull: the optimal rectangle has one side
    flush with a hull edge, so it is enough to test every edge direction.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateGeometryError("need at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise InvalidBoxError("non-finite point coordinates")
    hull = convex_hull(pts)
    span = float(np.ptp(pts, axis=0).max())
    if len(hull) < 3 or abs(signed_area(hull)) <= 1e-12 * span * span:
        raise DegenerateGeometryError("points are collinear")

    # Work relative to the hull centroid-ish origin to limit cancellation.
    origin = hull.mean(axis=0)
    hull = hull - origin
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    dirs = edges[keep] / lengths[keep, None]
    normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)

    proj_u = hull @ dirs.T      # (n_pts, n_edges)
    proj_v = hull @ normals.T
    umin, umax = proj_u.min(axis=0), proj_u.max(axis=0)
    vmin, vmax = proj_v.min(axis=0), proj_v.max(axis=0)
    areas = (umax - umin) * (vmax - vmin)
    i = int(np.argmin(areas))

    d, n = dirs[i], normals[i]
    len_u, len_v = umax[i] - umin[i], vmax[i] - vmin[i]
    c = origin + d * 0.5 * (umin[i] + umax[i]) + n * 0.5 * (vmin[i] + vmax[i])
    long_dir = d if len_u >= len_v else n
    theta = math.atan2(long_dir[0], long_dir[1])
    return canonicalize(c[0], c[1], max(len_u, len_v), min(len_u, len_v), theta)


def apply_offsets(init, off):
    """Refine ``init`` by an additive offset and re-canonicalize."""
    w = init.w + off.dw
    h = init.h + off.dh
    if not (w > 0 and h > 0):
        raise InvalidRefinementError(f"refined extents must be positive, got w={w}, h={h}")
    return canonicalize(init.x + off.dx, init.y + off.dy, w, h, init.theta + off.dtheta)


def acm_points(b, loc, stride):
    """Alignment-convolution sampling points for box ``b`` at ``loc``.

    Cell assignment over the row-major 3x3 grid: ``corners(b)[i]`` goes to the
    i-th diagonal cell, ``edge_midpoints(b)[i]`` to the i-th edge cell and
    ``loc`` itself to the centre cell.  Offsets are measured from
    ``loc + stride * cell`` and divided by ``stride``.
    """
    if not (stride > 0 and math.isfinite(stride)):
        raise ValueError(f"stride must be positive, got {stride}")
    loc = np.asarray(loc, dtype=float).reshape(2)
    points = np.empty((9, 2))
    points[list(_DIAGONAL_CELLS)] = corners(b)
    points[list(_EDGE_CELLS)] = edge_midpoints(b)
    points[_CENTER_CELL] = loc
    offsets = (points - (loc + stride * KERNEL_GRID)) / stride
    return AcmPointSet(points=points, offsets=offsets)
