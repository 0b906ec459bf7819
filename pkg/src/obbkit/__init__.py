"""Oriented bounding boxes: geometry, exact and pixel-based IoU, box-fitting
experiments, rotated NMS, VOC07 evaluation and DOTA-format I/O."""

from .errors import (
    BudgetError,
    ConfigurationError,
    DegenerateGeometryError,
    InvalidBoxError,
    InvalidRefinementError,
    ParseError,
)
from .evalkit import Detection, EvalReport, GroundTruth, evaluate, match_detections, rotated_nms, voc07_ap
from .fitkit import FitConfig, FitTrace, boundary_sweep, fit, smooth_l1
from .geom import OBB, AcmPointSet, Offset5, acm_points, apply_offsets, canonicalize, corners, min_area_rect
from .piou import Grad5, PiouConfig, PixelRegion, piou, piou_grad, piou_loss
from .polyclip import area, intersect, iou_exact

__version__ = "0.1.0"
