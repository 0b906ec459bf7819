"""Command-line entry point.

Boxes are given as ``x,y,w,h,theta_deg``.  Exit codes: 0 success, 2 invalid
input, 1 anything else.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import dotaio
from .errors import BudgetError
from .evalkit import Detection, evaluate, rotated_nms
from .fitkit import FitConfig, boundary_sweep, fit
from .geom import OBB, acm_points
from .piou import PiouConfig, piou
from .polyclip import iou_exact


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _box(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(f"expected x,y,w,h,theta_deg, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric box {text!r}") from None
    try:
        return OBB.from_degrees(*vals)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"{text!r}: {e}") from None


def _point(text):
    parts = text.split(",")
    try:
        x, y = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}") from None
    return x, y


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not v > 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v
    return conv


def _unit(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text!r}")
    return v


def _add_piou_flags(p):
    p.add_argument("--k", type=_positive(float), default=PiouConfig.k, help="kernel steepness")
    p.add_argument("--resolution", type=_positive(int), default=PiouConfig.resolution,
                   help="samples per pixel per axis")
    p.add_argument("--margin", type=float, default=PiouConfig.margin, help="lattice margin (px)")


def _piou_cfg(args):
    return PiouConfig(k=args.k, resolution=args.resolution, margin=args.margin)


def build_parser():
    parser = _Parser(prog="obbkit", description="Oriented-box geometry, PIoU and DOTA evaluation tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("iou", help="exact IoU and PIoU of two boxes")
    p.add_argument("--box", type=_box, action="append", required=True)
    _add_piou_flags(p)

    p = sub.add_parser("eval", help="VOC07 mAP of Task1 detections against DOTA ground truth")
    p.add_argument("--gt", required=True, help="directory of DOTA annotation files")
    p.add_argument("--det", required=True, help="directory of Task1_{class}.txt files")
    p.add_argument("--iou-thr", type=float, default=0.5)
    p.add_argument("--classes", help="class-name file, one per line (id = line index)")

    p = sub.add_parser("nms", help="rotated NMS over one Task1 detection file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tau", type=_unit, default=0.1)

    p = sub.add_parser("fit", help="gradient-descent box fit, trace written as CSV")
    p.add_argument("--loss", choices=["piou", "smoothl1"], default="piou")
    p.add_argument("--gt", type=_box, required=True)
    p.add_argument("--init", type=_box, required=True)
    p.add_argument("--steps", type=_positive(int), default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter-px", type=float, default=0.0, help="seeded init centre jitter (px)")
    p.add_argument("--jitter-deg", type=float, default=0.0, help="seeded init angle jitter (deg)")
    p.add_argument("--ambiguous", action="store_true",
                   help="alternate the target between its (w,h,t) and (h,w,t+90) encodings")
    p.add_argument("--out", default="-")
    _add_piou_flags(p)

    p = sub.add_parser("sweep", help="PIoU vs smooth-L1 loss while rotating a copy of the target")
    p.add_argument("--gt", type=_box, required=True)
    p.add_argument("--start", type=float, default=-180.0)
    p.add_argument("--stop", type=float, default=180.0)
    p.add_argument("--step", type=_positive(float), default=1.0)
    p.add_argument("--out", default="-")
    _add_piou_flags(p)

    p = sub.add_parser("tile", help="list crop windows")
    p.add_argument("--width", type=_positive(int), required=True)
    p.add_argument("--height", type=_positive(int), required=True)
    p.add_argument("--patch", type=_positive(int), default=1024)
    p.add_argument("--stride", type=_positive(int), default=824)
    p.add_argument("--out", default="-")

    p = sub.add_parser("merge", help="merge per-window Task1 detections into image coordinates")
    p.add_argument("--windows", required=True, help="file written by `tile`")
    p.add_argument("--dets", required=True,
                   help="Task1 directory whose image ids are IMAGE__WINDOWINDEX")
    p.add_argument("--tau", type=_unit, default=0.1)
    p.add_argument("--out", help="output directory for merged Task1 files (default: stdout)")

    p = sub.add_parser("acm", help="alignment-convolution sampling points of a box")
    p.add_argument("--box", type=_box, required=True)
    p.add_argument("--loc", type=_point, required=True)
    p.add_argument("--stride", type=_positive(float), required=True)
    return parser


def _parse(parser, argv):
    try:
        return parser.parse_args(argv)
    except UsageError:
        # argparse reports missing required flags before unknown ones; a
        # misspelt flag is the more useful diagnostic
        unknown = _unknown_flags(parser, argv)
        if unknown:
            raise UsageError(f"unrecognized arguments: {' '.join(unknown)}") from None
        raise


def _unknown_flags(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    sub = parser._subparsers._group_actions[0].choices if parser._subparsers else {}
    if not argv or argv[0] not in sub:
        return []
    known = sub[argv[0]]._option_string_actions
    return [a for a in argv[1:] if a.startswith("--") and a.split("=", 1)[0] not in known]


def _read(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _require_dir(path):
    if not Path(path).is_dir():
        raise FileNotFoundError(f"no such directory: {path}")


def cmd_iou(args, out):
    if len(args.box) != 2:
        raise UsageError(f"argument --box: expected exactly 2 boxes, got {len(args.box)}")
    a, b = args.box
    out.write(f"exact: {iou_exact(a, b):.4f}\n")
    out.write(f"piou: {piou(a, b, _piou_cfg(args)):.4f}\n")


def cmd_eval(args, out):
    _require_dir(args.gt)
    _require_dir(args.det)
    if not 0 < args.iou_thr < 1:
        raise UsageError(f"argument --iou-thr: must be in (0, 1), got {args.iou_thr}")
    ann = dotaio.read_annotation_dir(args.gt)
    if args.classes:
        class_map = dotaio.load_class_map(args.classes)
    else:
        names = {o.class_name for a in ann for o in a.objects}
        names |= {p.stem[len(dotaio.TASK1_PREFIX):]
                  for p in Path(args.det).glob(f"{dotaio.TASK1_PREFIX}*.txt")}
        class_map = {n: i for i, n in enumerate(sorted(names))}
    gts = [g for a in ann for g in a.ground_truths(class_map)]
    dets, _ = dotaio.parse_detections(args.det, class_map)
    report = evaluate(dets, gts, args.iou_thr, num_classes=len(class_map))
    names = sorted(class_map, key=class_map.get)
    out.write(report.format_table(names) + "\n")


def cmd_nms(args, out):
    dets = dotaio.parse_detection_lines(_read(args.infile), 0, args.infile)
    groups = {}
    for d in dets:
        groups.setdefault(d.image_id, []).append(d)
    for image_id in sorted(groups):
        for d in rotated_nms(groups[image_id], args.tau):
            out.write(dotaio.format_detection(d) + "\n")


def cmd_fit(args, out):
    cfg = FitConfig(
        loss="piou" if args.loss == "piou" else "smooth_l1",
        max_steps=args.steps,
        seed=args.seed,
        jitter=(args.jitter_px, math.radians(args.jitter_deg)),
        piou=_piou_cfg(args),
    )
    g = args.gt
    targets = None
    if args.ambiguous:
        targets = [g.as_tuple(), (g.x, g.y, g.h, g.w, g.theta + math.pi / 2)]
    trace = fit(g, args.init, cfg, targets=targets)
    fh, close = dotaio.open_output(args.out, out)
    try:
        dotaio.write_trace_csv(trace, fh)
    finally:
        if close:
            fh.close()
    if close:
        out.write(
            f"steps: {len(trace.steps)} converged: {'yes' if trace.converged else 'no'} "
            f"final_iou: {trace.final_iou:.4f} "
            f"angle_error_deg: {math.degrees(trace.angle_error):.4f}\n")


def cmd_sweep(args, out):
    n = int(math.floor((args.stop - args.start) / args.step + 1e-9)) + 1
    if n < 1:
        raise UsageError("argument --stop: must not be below --start")
    angles = np.radians(args.start + args.step * np.arange(n))
    rows = boundary_sweep(args.gt, angles, _piou_cfg(args))
    fh, close = dotaio.open_output(args.out, out)
    try:
        dotaio.write_sweep_csv(rows, fh)
    finally:
        if close:
            fh.close()


def cmd_tile(args, out):
    wins = dotaio.tile_windows(args.width, args.height, args.patch, args.stride)
    fh, close = dotaio.open_output(args.out, out)
    try:
        dotaio.write_windows(wins, fh)
    finally:
        if close:
            fh.close()
    if close:
        out.write(f"{len(wins)} windows\n")


def _split_patch_id(image_id):
    base, sep, idx = image_id.rpartition("__")
    if not sep or not idx.isdigit():
        raise ValueError(f"patch image id {image_id!r} is not of the form IMAGE__INDEX")
    return base, int(idx)


def cmd_merge(args, out):
    _require_dir(args.dets)
    windows = dotaio.parse_windows(_read(args.windows), args.windows)
    dets, class_map = dotaio.parse_detections(args.dets)
    per_window = {}
    for d in dets:
        base, idx = _split_patch_id(d.image_id)
        per_window.setdefault(idx, []).append(Detection(base, d.class_id, d.score, d.box))
    merged = dotaio.merge_patch_detections(dict(sorted(per_window.items())), windows, args.tau)
    names = sorted(class_map, key=class_map.get)
    if args.out:
        dotaio.write_detections(merged, args.out, names)
        out.write(f"{len(merged)} detections\n")
    else:
        for d in merged:
            out.write(f"{names[d.class_id]} {dotaio.format_detection(d)}\n")


def cmd_acm(args, out):
    s = acm_points(args.box, args.loc, args.stride)
    for i, (p, o) in enumerate(zip(s.points, s.offsets)):
        out.write(f"{i} {p[0]:.6f} {p[1]:.6f} {o[0]:.6f} {o[1]:.6f}\n")


COMMANDS = {
    "iou": cmd_iou, "eval": cmd_eval, "nms": cmd_nms, "fit": cmd_fit,
    "sweep": cmd_sweep, "tile": cmd_tile, "merge": cmd_merge, "acm": cmd_acm,
}


def run(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parse(build_parser(), argv)
        COMMANDS[args.command](args, out)
    except UsageError as e:
        err.write(f"obbkit: error: {e}\n")
        return 2
    except BudgetError as e:
        err.write(f"obbkit: error: {e}\n")
        return 1
    except (ValueError, IndexError, FileNotFoundError) as e:
        err.write(f"obbkit: error: {e}\n")
        return 2
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001
        err.write(f"obbkit: error: {type(e).__name__}: {e}\n")
        return 1
    return 0


def main():
    sys.exit(run())
