"""Text spotting core: polygon geometry, set matching, losses, attention kernels,
underwater degradation and enhancement, synthetic scenes and scoring.

Hot loops (edit distance, assignment, polygon intersection) run in a compiled
extension when it is built; ``spotkit.BACKEND`` names the active one and the
environment variable ``SPOTKIT_PURE_PYTHON=1`` forces the Python fallback.
"""
from ._accel import BACKEND
from .assignment import Assignment, hungarian_solve, match_instances, spotting_match_cost
from .geometry import (BBox, GeometryError, Point, Polygon, bbox_giou, bbox_iou,
                       denormalize_points, normalize_points, polygon_area, polygon_bbox,
                       polygon_iou)
from .losses import LossValue, LossWeights
from .metrics import (Lexicon, MetricReport, SpotInstance, aggregate_report, detection_prf,
                      e2e_score, edit_distance, lexicon_correct)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Assignment", "BBox", "GeometryError", "Lexicon", "LossValue", "LossWeights",
    "MetricReport", "Point", "Polygon", "SpotInstance", "aggregate_report", "bbox_giou",
    "bbox_iou", "denormalize_points", "detection_prf", "e2e_score", "edit_distance",
    "hungarian_solve", "lexicon_correct", "match_instances", "normalize_points",
    "polygon_area", "polygon_bbox", "polygon_iou", "spotting_match_cost",
]
