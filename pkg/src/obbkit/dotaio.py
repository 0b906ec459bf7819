"""DOTA-format text I/O, image tiling windows and cross-patch merging.

Ground truth (DOTA v1.0), one object per line::

    x1 y1 x2 y2 x3 y3 x4 y4 class difficult

Lines with a different token count ("imagesource:...", "gsd:...") are
skipped.  Detections (DOTA Task1) live in one ``Task1_{class}.txt`` per class::

    image_id score x1 y1 x2 y2 x3 y3 x4 y4
"""
from __future__ import annotations

import csv
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError
from .evalkit import Detection, GroundTruth, rotated_nms
from .geom import corners, min_area_rect

DOTA_CLASSES = (
    "plane", "baseball-diamond", "bridge", "ground-track-field", "small-vehicle",
    "large-vehicle", "ship", "tennis-court", "basketball-court", "storage-tank",
    "soccer-ball-field", "roundabout", "harbor", "swimming-pool", "helicopter",
)

TASK1_PREFIX = "Task1_"
TRACE_HEADER = ["step", "x", "y", "w", "h", "theta_deg", "loss", "iou"]
SWEEP_HEADER = ["angle_deg", "piou_loss", "smooth_l1"]


@dataclass(frozen=True)
class AnnotatedObject:
    quad: np.ndarray
    class_name: str
    difficult: bool = False

    def obb(self):
        return min_area_rect(self.quad)


@dataclass
class AnnotationFile:
    image_id: str
    objects: list

    def ground_truths(self, class_map):
        """Convert to :class:`GroundTruth` records; ``class_map`` maps class
        name to id."""
        out = []
        for obj in self.objects:
            if obj.class_name not in class_map:
                raise ConfigurationError(f"unknown class {obj.class_name!r} in {self.image_id}")
            out.append(GroundTruth(self.image_id, class_map[obj.class_name], obj.obb(), obj.difficult))
        return out


@dataclass(frozen=True)
class TileWindow:
    x0: int
    y0: int
    width: int
    height: int


def _floats(tokens, lineno, source):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not _is_float(t))
        raise ParseError(f"bad numeric token {bad!r}", lineno, source) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite coordinate", lineno, source)
    return vals


def _is_float(t):
    try:
        float(t)
    except ValueError:
        return False
    return True


def parse_annotations(text, image_id="", source=None):
    objects = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if len(tok) != 10:
            continue
        coords = _floats(tok[:8], lineno, source)
        try:
            difficult = int(tok[9]) != 0
        except ValueError:
            raise ParseError(f"bad difficult flag {tok[9]!r}", lineno, source) from None
        quad = np.array(coords).reshape(4, 2)
        objects.append(AnnotatedObject(quad, tok[8], difficult))
    return AnnotationFile(image_id, objects)


def read_annotation_dir(path):
    """Parse every ``*.txt`` in ``path``; the image id is the file stem."""
    files = []
    for p in sorted(Path(path).glob("*.txt")):
        files.append(parse_annotations(p.read_text(encoding="utf-8"), p.stem, source=str(p)))
    return files


def load_class_map(path):
    """One class name per line; the id is the line index (blank lines skipped)."""
    names = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    names = [n for n in names if n]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate class names in {path}")
    return {n: i for i, n in enumerate(names)}


def format_detection(d):
    pts = corners(d.box).ravel()
    return f"{d.image_id} {d.score:.6f} " + " ".join(f"{v:.6f}" for v in pts)


def write_detections(dets, out_dir, class_names):
    """Write one ``Task1_{class}.txt`` per entry of ``class_names`` (empty files
    included); detections are grouped by ``class_id`` indexing that list."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_class = {i: [] for i in range(len(class_names))}
    for d in dets:
        if d.class_id not in by_class:
            raise ConfigurationError(f"class id {d.class_id} has no name")
        by_class[d.class_id].append(d)
    paths = []
    for i, name in enumerate(class_names):
        p = out_dir / f"{TASK1_PREFIX}{name}.txt"
        lines = [format_detection(d) + "\n" for d in by_class[i]]
        with open(p, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
        paths.append(p)
    return paths


def parse_detection_lines(text, class_id, source=None):
    dets = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        if len(tok) != 10:
            raise ParseError(f"expected 10 tokens, got {len(tok)}", lineno, source)
        vals = _floats(tok[1:], lineno, source)
        box = min_area_rect(np.array(vals[1:]).reshape(4, 2))
        dets.append(Detection(tok[0], class_id, vals[0], box))
    return dets


def parse_detections(det_dir, class_map=None):
    """Read every ``Task1_*.txt`` in ``det_dir``.

    Without ``class_map`` ids follow the sorted class names found on disk.
    Returns ``(detections, class_map)``.
    """
    files = sorted(Path(det_dir).glob(f"{TASK1_PREFIX}*.txt"))
    names = [p.stem[len(TASK1_PREFIX):] for p in files]
    if class_map is None:
        class_map = {n: i for i, n in enumerate(sorted(names))}
    dets = []
    for p, name in zip(files, names):
        if name not in class_map:
            raise ConfigurationError(f"detections for unknown class {name!r} in {p}")
        dets.extend(parse_detection_lines(p.read_text(encoding="utf-8"), class_map[name], str(p)))
    return dets, class_map


def _axis_origins(dim, patch, stride):
    if dim <= patch:
        return [0]
    origins = []
    o = 0
    while True:
        o = min(o, dim - patch)
        if not origins or origins[-1] != o:
            origins.append(o)
        if o + patch >= dim:
            return origins
        o += stride


def tile_windows(width, height, patch=1024, stride=824):
    """Crop windows over a ``width x height`` image, row-major (y, then x).

    Per axis: origins 0, stride, 2*stride, ... until a window reaches the far
    edge; the last one is pulled back so it ends exactly at the edge.
    """
    for name, v in (("width", width), ("height", height), ("patch", patch), ("stride", stride)):
        if int(v) != v or v <= 0:
            raise ConfigurationError(f"{name} must be a positive integer, got {v}")
    if stride > patch:
        raise ConfigurationError(f"stride ({stride}) must not exceed patch ({patch})")
    xs = _axis_origins(width, patch, stride)
    ys = _axis_origins(height, patch, stride)
    pw, ph = min(patch, width), min(patch, height)
    return [TileWindow(x, y, pw, ph) for y in ys for x in xs]


def merge_patch_detections(per_window, windows, nms_tau=0.1):
    """Shift window-local detections to image coordinates and run class-wise
    rotated NMS per image.

    ``per_window`` maps a window index to its detections (a list indexed by
    window works too).
    """
    items = per_window.items() if hasattr(per_window, "items") else enumerate(per_window)
    shifted = []
    for idx, dets in items:
        if not (0 <= idx < len(windows)):
            raise IndexError(f"window index {idx} out of range (have {len(windows)})")
        win = windows[idx]
        for d in dets:
            shifted.append(Detection(d.image_id, d.class_id, d.score, d.box.translated(win.x0, win.y0)))
    groups = {}
    for d in shifted:
        groups.setdefault((d.image_id, d.class_id), []).append(d)
    merged = []
    for key in sorted(groups):
        merged.extend(rotated_nms(groups[key], nms_tau))
    return merged


def write_windows(windows, fh):
    for i, w in enumerate(windows):
        fh.write(f"{i} {w.x0} {w.y0} {w.width} {w.height}\n")


def parse_windows(text, source=None):
    """Inverse of :func:`write_windows`; indices must run 0..n-1 in order."""
    wins = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        if len(tok) != 5:
            raise ParseError(f"expected 5 tokens, got {len(tok)}", lineno, source)
        try:
            idx, x0, y0, w, h = (int(t) for t in tok)
        except ValueError:
            raise ParseError("window fields must be integers", lineno, source) from None
        if idx != len(wins):
            raise ParseError(f"window index {idx} out of sequence", lineno, source)
        wins.append(TileWindow(x0, y0, w, h))
    return wins


def write_trace_csv(trace, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for s in trace.steps:
        b = s.box
        w.writerow([s.step, _f(b.x), _f(b.y), _f(b.w), _f(b.h), _f(math.degrees(b.theta)),
                    _f(s.loss), _f(s.iou)])


def write_sweep_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for angle, pl, sl in rows:
        w.writerow([_f(math.degrees(angle)), _f(pl), _f(sl)])


def _f(v):
    return f"{v:.10g}"


def open_output(path, stdout=None):
    """Return ``(handle, needs_close)``.  ``-`` means ``stdout`` (default
    ``sys.stdout``); anything else is opened for writing."""
    if path in (None, "-"):
        return stdout or sys.stdout, False
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return open(path, "w", encoding="utf-8", newline=""), True
