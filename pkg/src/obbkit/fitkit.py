"""Gradient-descent box regression: PIoU loss vs. a smooth-L1 baseline.

This is a toy harness for looking at the two loss landscapes, not a
training loop.  One box is pushed toward a target by gradient descent with
separate step lengths for translation, extents and angle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidBoxError
from .geom import OBB, as_obb, canonicalize
from .piou import PiouConfig, piou_loss, piou_loss_and_grad
from .polyclip import iou_exact

LOSS_KINDS = ("piou", "smooth_l1")


@dataclass(frozen=True)
class FitConfig:
    loss: str = "piou"
    # step lengths: px, px, rad
    step_translation: float = 0.5
    step_extent: float = 0.2
    step_angle: float = 0.01
    max_steps: int = 500
    iou_target: float = 0.9
    # seeded uniform jitter applied to the init: (centre px, angle rad)
    seed: int = 0
    jitter: tuple = (0.0, 0.0)
    beta: float = 1.0
    piou: PiouConfig = field(default_factory=PiouConfig)
    # backtracking: halve the step while the loss rises by more than `tol`
    tol: float = 1e-9
    max_halvings: int = 20

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        for name in ("step_translation", "step_extent", "step_angle", "beta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if self.max_steps < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (0 < self.iou_target <= 1):
            raise ConfigurationError(f"iou_target must be in (0, 1], got {self.iou_target}")
        if len(self.jitter) != 2 or min(self.jitter) < 0:
            raise ConfigurationError(f"jitter must be two non-negative numbers, got {self.jitter}")


@dataclass(frozen=True)
class FitStep:
    step: int
    box: OBB
    loss: float
    iou: float


@dataclass
class FitTrace:
    steps: list
    converged: bool
    final_iou: float
    angle_error: float
    saturated: bool = False
    stalled: bool = False

    @property
    def final_box(self):
        return self.steps[-1].box


def smooth_l1(b, g, beta=1.0):
    """Smooth-L1 over the five raw parameter differences, with its gradient
    w.r.t. ``b``.

    ``b`` and ``g`` may be OBBs or raw 5-sequences.  The angle difference is
    taken as-is, with no wrap-around.
    """
    if not beta > 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    pb = np.asarray(b.as_tuple() if isinstance(b, OBB) else b, dtype=float)
    pg = np.asarray(g.as_tuple() if isinstance(g, OBB) else g, dtype=float)
    d = pb - pg
    ad = np.abs(d)
    quad = ad < beta
    terms = np.where(quad, 0.5 * d * d / beta, ad - 0.5 * beta)
    grad = np.where(quad, d / beta, np.sign(d))
    return float(math.fsum(terms)), grad


def angle_error(b, g):
    """Smallest rotation aligning the axes of ``b`` with those of ``g``,
    modulo the half-turn symmetry of a rectangle.  Radians in [0, pi/2]."""
    b, g = as_obb(b), as_obb(g)
    d = math.fmod(abs(b.theta - g.theta), math.pi)
    return min(d, math.pi - d)


def _loss_grad(box, target, cfg):
    if cfg.loss == "piou":
        loss, grad = piou_loss_and_grad(box, target, cfg.piou)
        return loss, grad.as_array()
    return smooth_l1(box, target, cfg.beta)


def _loss(box, target, cfg):
    if cfg.loss == "piou":
        return piou_loss(box, target, cfg.piou)
    return smooth_l1(box, target, cfg.beta)[0]


_GROUPS = (slice(0, 2), slice(2, 4), slice(4, 5))


def _descent_direction(grad, cfg):
    """Per-group normalized negative gradient, scaled to the group's step
    length (px for translation and extents, rad for the angle)."""
    out = np.zeros(5)
    lengths = (cfg.step_translation, cfg.step_extent, cfg.step_angle)
    for sl, length in zip(_GROUPS, lengths):
        n = float(np.linalg.norm(grad[sl]))
        if n > 0:
            out[sl] = -length * grad[sl] / n
    return out


def _jittered(box, cfg):
    jt, ja = cfg.jitter
    if jt == 0 and ja == 0:
        return box
    # numpy's default generator is PCG64; same seed, same stream everywhere
    rng = np.random.default_rng(cfg.seed)
    dx, dy = rng.uniform(-jt, jt, size=2) if jt > 0 else (0.0, 0.0)
    da = rng.uniform(-ja, ja) if ja > 0 else 0.0
    return canonicalize(box.x + dx, box.y + dy, box.w, box.h, box.theta + da)


def fit(g, init, cfg=FitConfig(), targets=None):
    """Run gradient descent from ``init`` toward ground truth ``g``.

    ``init`` is canonicalized once (after the optional seeded jitter); after
    that the raw parameters evolve freely, as a regression head's outputs
    would.  Each parameter group moves
    by its configured step length along its negative gradient, halving the
    step while the loss would rise by more than ``cfg.tol``.

    ``targets`` optionally overrides what the loss regresses to: step ``t``
    uses ``targets[t % len(targets)]`` (raw 5-tuples allowed).  This is how
    an ambiguous encoding of the same ground truth is simulated.  Exact IoU
    is always measured against ``g``.
    """
    g = as_obb(g)
    box = _jittered(as_obb(init), cfg)
    if targets is None:
        targets = [g]
    targets = [t if isinstance(t, OBB) else OBB(*map(float, t)) for t in targets]

    saturated = cfg.loss == "piou" and iou_exact(box, g) < 0.01
    stalled = False
    steps = []
    for t in range(cfg.max_steps):
        target = targets[t % len(targets)]
        loss, grad = _loss_grad(box, target, cfg)
        iou = iou_exact(box, g)
        steps.append(FitStep(t, box, loss, iou))
        if iou >= cfg.iou_target or t == cfg.max_steps - 1:
            break
        direction = _descent_direction(grad, cfg)
        if not direction.any():
            stalled = True
            break
        params = np.array(box.as_tuple())
        scale = 1.0
        for _ in range(cfg.max_halvings + 1):
            try:
                cand = OBB(*(params + scale * direction))
            except InvalidBoxError:
                cand = None
            if cand is not None and _loss(cand, target, cfg) <= loss + cfg.tol:
                break
            scale *= 0.5
        else:
            stalled = True
            break
        box = cand

    last = steps[-1]
    return FitTrace(
        steps=steps,
        converged=last.iou >= cfg.iou_target,
        final_iou=last.iou,
        angle_error=angle_error(last.box, g),
        saturated=saturated,
        stalled=stalled,
    )


def boundary_sweep(g, angles, cfg=PiouConfig(), beta=1.0):
    """Loss of ``g`` rotated to each angle (radians) against ``g`` itself.

    Returns rows ``(angle, piou_loss, smooth_l1)``; predictions are
    canonicalized before scoring, so the smooth-L1 column shows the jump where
    the angle wraps.
    """
    g = as_obb(g)
    rows = []
    for a in angles:
        pred = canonicalize(g.x, g.y, g.w, g.h, a)
        rows.append((float(a), piou_loss(pred, g, cfg), smooth_l1(pred, g, beta)[0]))
    return rows
