"""Pixel-based differentiable IoU (PIoU) for rotated boxes.

Each sample point ``p`` gets a soft membership in box ``b``::

    F(p | b) = K(d_w, w/2) * K(d_h, h/2),    K(d, s) = 1 - 1 / (1 + exp(-k (d - s)))

where ``d_w``, ``d_h`` are the distances from the box centre measured along
the long and short axes.  The soft intersection is the sum of
``F(p|b) F(p|g)`` over a sample lattice, the union is
``w h + w' h' - intersection`` and PIoU is their ratio.

The kernels are centred at the half extents, so that ``k -> inf`` recovers
the hard inside test exactly.

Gradients are taken with respect to the first box only, holding the lattice
fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import BudgetError, ConfigurationError
from .geom import corners

LOSS_KINDS = ("log", "linear")


@dataclass(frozen=True)
class PiouConfig:
    k: float = 10.0
    resolution: int = 4
    margin: float = 2.0
    eps: float = 1e-6
    loss: str = "log"
    max_samples: int = 1 << 22

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ConfigurationError(f"k must be positive, got {self.k}")
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise ConfigurationError(f"resolution must be an integer >= 1, got {self.resolution}")
        if not (self.margin >= 0 and math.isfinite(self.margin)):
            raise ConfigurationError(f"margin must be >= 0, got {self.margin}")
        if not (0 < self.eps < 1):
            raise ConfigurationError(f"eps must be in (0, 1), got {self.eps}")
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.max_samples < 1:
            raise ConfigurationError("max_samples must be >= 1")


@dataclass(frozen=True)
class Grad5:
    d_x: float
    d_y: float
    d_w: float
    d_h: float
    d_theta: float

    def as_array(self):
        return np.array([self.d_x, self.d_y, self.d_w, self.d_h, self.d_theta])


@dataclass(frozen=True)
class PixelRegion:
    """Sample lattice: ``xs`` by ``ys`` points, each carrying ``weight`` area.

    Pixel centres sit at integer coordinates; with resolution ``r`` each pixel
    is split into ``r x r`` sub-samples of weight ``1/r**2``.
    """

    x0: int
    y0: int
    nx: int
    ny: int
    resolution: int

    @property
    def spacing(self):
        return 1.0 / self.resolution

    @property
    def weight(self):
        return self.spacing ** 2

    @property
    def size(self):
        return self.nx * self.ny * self.resolution ** 2

    def axes(self):
        r = self.resolution
        sub = (np.arange(r) + 0.5) / r - 0.5
        xs = (np.arange(self.nx)[:, None] + self.x0 + sub[None, :]).ravel()
        ys = (np.arange(self.ny)[:, None] + self.y0 + sub[None, :]).ravel()
        return xs, ys


def pixel_region(b, g, cfg=PiouConfig()):
    """Lattice covering both boxes' corners plus ``cfg.margin`` on each side."""
    pts = np.vstack([corners(b), corners(g)])
    lo = pts.min(axis=0) - cfg.margin
    hi = pts.max(axis=0) + cfg.margin
    x0, y0 = math.floor(lo[0]), math.floor(lo[1])
    x1, y1 = math.ceil(hi[0]), math.ceil(hi[1])
    region = PixelRegion(x0, y0, x1 - x0 + 1, y1 - y0 + 1, int(cfg.resolution))
    if region.size > cfg.max_samples:
        raise BudgetError(
            f"PIoU lattice needs {region.size} samples, budget is {cfg.max_samples}")
    return region


def local_distances(p, b):
    """``(d_w, d_h)``: distances from the centre of ``b`` to ``p`` along the
    long and short axes."""
    e_w, e_h = b.axes()
    v = np.asarray(p, dtype=float) - b.center
    return abs(float(v @ e_w)), abs(float(v @ e_h))


def delta(p, b):
    d_w, d_h = local_distances(p, b)
    return int(d_w <= 0.5 * b.w and d_h <= 0.5 * b.h)


def kernel(d, half_extent, k):
    # 1 - sigmoid(k (d - s)) == sigmoid(k (s - d)), the stable form
    return expit(k * (np.asarray(half_extent) - np.asarray(d)))


def contribution(p, b, cfg=PiouConfig()):
    d_w, d_h = local_distances(p, b)
    return float(kernel(d_w, 0.5 * b.w, cfg.k) * kernel(d_h, 0.5 * b.h, cfg.k))


class _Field:
    """Soft membership of one box evaluated on a lattice, plus the pieces
    needed for its parameter derivatives."""

    def __init__(self, b, xs, ys, k):
        s, c = math.sin(b.theta), math.cos(b.theta)
        dx = (xs - b.x)[None, :]
        dy = (ys - b.y)[:, None]
        self.sin, self.cos = s, c
        self.u = dx * s + dy * c          # along e_w
        self.v = dx * c - dy * s          # along e_h
        self.ku = expit(k * (0.5 * b.w - np.abs(self.u)))
        self.kv = expit(k * (0.5 * b.h - np.abs(self.v)))
        self.f = self.ku * self.kv
        self.k = k

    def partials(self, weights):
        """Return sum(weights * dF/dq) for q in (x, y, w, h, theta)."""
        k = self.k
        # dK/dd for each axis kernel, d being the absolute local distance
        gu = -k * self.ku * (1.0 - self.ku)
        gv = -k * self.kv * (1.0 - self.kv)
        a = weights * self.kv * gu * np.sign(self.u)   # dF/du
        bb = weights * self.ku * gv * np.sign(self.v)  # dF/dv
        sa, sb = _lattice_sum(a), _lattice_sum(bb)
        s, c = self.sin, self.cos
        d_x = -s * sa - c * sb
        d_y = -c * sa + s * sb
        d_theta = _lattice_sum(a * self.v) - _lattice_sum(bb * self.u)
        d_w = -0.5 * _lattice_sum(weights * self.kv * gu)
        d_h = -0.5 * _lattice_sum(weights * self.ku * gv)
        return np.array([d_x, d_y, d_w, d_h, d_theta])


def _lattice_sum(arr):
    # One reduction over the whole fixed-shape array: numpy's pairwise sum
    # is deterministic for a given shape, so results never depend on how the
    # caller batches work.
    return float(np.sum(arr))


def _evaluate(b, g, cfg, region, want_grad):
    if region is None:
        region = pixel_region(b, g, cfg)
    xs, ys = region.axes()
    fb = _Field(b, xs, ys, cfg.k)
    fg = _Field(g, xs, ys, cfg.k)
    wgt = region.weight
    inter = _lattice_sum(fb.f * fg.f) * wgt
    union = b.area + g.area - inter
    raw = inter / union
    value = min(1.0, max(cfg.eps, raw))
    if cfg.loss == "log":
        loss = -math.log(value)
    else:
        loss = 1.0 - value
    if not want_grad:
        return value, loss, None
    if raw != value:
        return value, loss, np.zeros(5)
    d_inter = fb.partials(fg.f) * wgt
    d_area = np.array([0.0, 0.0, b.h, b.w, 0.0])
    # d(I/U) with U = A_b + A_g - I
    d_piou = (d_inter * (union + inter) - inter * d_area) / (union * union)
    if cfg.loss == "log":
        grad = -d_piou / value
    else:
        grad = -d_piou
    return value, loss, grad


def piou(b, g, cfg=PiouConfig(), region=None):
    """PIoU of ``b`` and ``g``, clamped to ``[cfg.eps, 1]``."""
    return _evaluate(b, g, cfg, region, False)[0]


def piou_loss(b, g, cfg=PiouConfig(), region=None):
    """``-ln(piou)`` (or ``1 - piou`` with ``cfg.loss == "linear"``)."""
    return _evaluate(b, g, cfg, region, False)[1]


def piou_loss_and_grad(b, g, cfg=PiouConfig(), region=None):
    _, loss, grad = _evaluate(b, g, cfg, region, True)
    return loss, Grad5(*map(float, grad))


def piou_grad(b, g, cfg=PiouConfig(), region=None):
    """Gradient of :func:`piou_loss` w.r.t. ``(x, y, w, h, theta)`` of ``b``.

    ``g`` is held constant.  The subgradient of ``|u|`` at exactly 0 is taken
    as 0.
    """
    return piou_loss_and_grad(b, g, cfg, region)[1]
