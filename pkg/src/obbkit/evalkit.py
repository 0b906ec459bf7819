"""Rotated NMS and VOC2007 11-point AP / mAP over oriented boxes.

All overlaps here are exact polygon IoU; the PIoU approximation is never used
for evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .polyclip import iou_exact

TP, FP, IGNORED = "TP", "FP", "IGNORED"


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    box: object

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ConfigurationError(f"detection score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: object
    difficult: bool = False


@dataclass
class EvalReport:
    ap: dict
    mAP: float
    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    npos: dict = field(default_factory=dict)
    iou_thr: float = 0.5

    def format_table(self, class_names=None):
        lines = []
        for c in sorted(self.ap):
            name = class_names[c] if class_names is not None else str(c)
            lines.append(f"{name:<24s} {self.ap[c]:.4f}")
        lines.append(f"mAP: {self.mAP:.4f}")
        return "\n".join(lines)


def _score_order(dets):
    """Indices of ``dets`` by descending score, then image id, then input
    position."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].image_id, i))


def rotated_nms(dets, tau):
    """Greedy NMS: keep a detection iff its IoU with every kept one is < tau.

    Callers apply it per image and per class.  Output is in descending score
    order, ties kept in input order.
    """
    if not (0 <= tau <= 1):
        raise ConfigurationError(f"NMS threshold must be in [0, 1], got {tau}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        d = dets[i]
        if all(iou_exact(d.box, k.box) < tau for k in kept):
            kept.append(d)
    return kept


def _check_classes(items, num_classes):
    if num_classes is None:
        return
    for it in items:
        if not (0 <= it.class_id < num_classes):
            raise ConfigurationError(
                f"class id {it.class_id} outside [0, {num_classes}) for image {it.image_id!r}")


def match_detections(dets, gts, iou_thr=0.5, num_classes=None):
    """Label every detection TP, FP or IGNORED using the VOC protocol.

    Returns ``(order, labels)``: the score-sorted detection indices and the
    label of each, aligned.  A detection takes the unmatched same-class,
    same-image ground truth of highest IoU >= ``iou_thr``; hitting a difficult
    ground truth makes it IGNORED.  Each ground truth is matched at most once.
    """
    if not (0 < iou_thr < 1):
        raise ConfigurationError(f"IoU threshold must be in (0, 1), got {iou_thr}")
    _check_classes(dets, num_classes)
    _check_classes(gts, num_classes)

    by_key = {}
    for j, g in enumerate(gts):
        by_key.setdefault((g.image_id, g.class_id), []).append(j)
    used = [False] * len(gts)

    order = _score_order(dets)
    labels = []
    for i in order:
        d = dets[i]
        best, best_j = -1.0, None
        for j in by_key.get((d.image_id, d.class_id), ()):
            if used[j] and not gts[j].difficult:
                continue
            ov = iou_exact(d.box, gts[j].box)
            if ov > best:
                best, best_j = ov, j
        if best_j is None or best < iou_thr:
            labels.append(FP)
        elif gts[best_j].difficult:
            labels.append(IGNORED)
        else:
            used[best_j] = True
            labels.append(TP)
    return order, labels


def voc07_ap(labels, npos):
    """11-point interpolated AP from score-ordered TP/FP labels.

    ``labels`` may hold booleans (True = TP) or the TP/FP/IGNORED strings;
    ignored entries are dropped.  Recall thresholds 0, 0.1, ..., 1 are
    compared exactly (``10 * tp >= i * npos``) so there is no float drift at
    the grid points.
    """
    if npos <= 0:
        return 0.0
    seq = []
    for lab in labels:
        if isinstance(lab, str):
            if lab == IGNORED:
                continue
            seq.append(lab == TP)
        else:
            seq.append(bool(lab))
    tp = fp = 0
    curve = []          # (tp count, precision) after each detection
    for hit in seq:
        if hit:
            tp += 1
        else:
            fp += 1
        curve.append((tp, tp / (tp + fp)))
    # running max of precision from the tail
    best = [0.0] * (len(curve) + 1)
    for n in range(len(curve) - 1, -1, -1):
        best[n] = max(best[n + 1], curve[n][1])
    total = 0.0
    n = 0
    for i in range(11):
        while n < len(curve) and 10 * curve[n][0] < i * npos:
            n += 1
        total += best[n] if n < len(curve) else 0.0
    return total / 11.0


def evaluate(dets, gts, iou_thr=0.5, num_classes=None):
    """Per-class VOC07 AP and mAP.

    The class universe is ``range(num_classes)`` when given, otherwise every
    class id seen in either input.  mAP averages over classes with at least
    one non-difficult ground truth; 0.0 if there are none.
    """
    dets = list(dets)
    gts = list(gts)
    if num_classes is not None:
        classes = list(range(num_classes))
    else:
        classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})

    report = EvalReport(ap={}, mAP=0.0, iou_thr=iou_thr)
    aps = []
    for c in classes:
        cd = [d for d in dets if d.class_id == c]
        cg = [g for g in gts if g.class_id == c]
        _, labels = match_detections(cd, cg, iou_thr, num_classes)
        npos = sum(1 for g in cg if not g.difficult)
        ap = voc07_ap(labels, npos)
        report.ap[c] = ap
        report.tp[c] = labels.count(TP)
        report.fp[c] = labels.count(FP)
        report.npos[c] = npos
        if npos > 0:
            aps.append(ap)
    report.mAP = math.fsum(aps) / len(aps) if aps else 0.0
    return report
