"""Object recognition, cross-modal fusion and multi-object tracking."""
from .assignment import FORBIDDEN, InfeasibleAssignment, solve_assignment
from .descriptors import DIM, cosine, encode_descriptor
from .fusion import fuse_observations
from .observations import CalibrationSet, ObjectObservation
from .segmentation import (
    ScanHistory,
    SegmentationParams,
    segment_image_frame,
    segment_point_cloud,
)
from .tracking import TrackedObject, TrackingParams, TrackSet, track_objects

__all__ = [
    "DIM", "FORBIDDEN", "CalibrationSet", "InfeasibleAssignment", "ObjectObservation",
    "ScanHistory", "SegmentationParams", "TrackSet", "TrackedObject", "TrackingParams",
    "cosine", "encode_descriptor", "fuse_observations", "segment_image_frame",
    "segment_point_cloud", "solve_assignment", "track_objects",
]
