"""Observation records shared by the image and point-cloud branches."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo


@dataclass
class CalibrationSet:
    """Sensor mounting: ``camera_to_base`` maps the optical frame to the base."""

    camera_to_base: np.ndarray
    lidar_to_base: np.ndarray

    def __post_init__(self):
        for name in ("camera_to_base", "lidar_to_base"):
            if not geo.is_valid_pose(getattr(self, name)):
                raise ValueError(f"{name} is not a valid rigid transform")

    @classmethod
    def from_scenario(cls, spec):
        return cls(spec.camera.optical_to_base(), spec.lidar.extrinsic.copy())


@dataclass
class ObjectObservation:
    source: str  # image | pointcloud | fused
    aabb_world: np.ndarray  # (2, 3)
    centroid: np.ndarray
    label: str
    embedding: np.ndarray
    confidence: float = 1.0
    mask_pixels: np.ndarray | None = None  # (k, 2) rows of (v, u)
    point_indices: np.ndarray | None = None  # into the current scan
    true_id: int | None = None
    extras: dict = field(default_factory=dict)


def pad_aabb(box, min_extent):
    """Grow each axis symmetrically to at least ``min_extent``."""
    box = np.array(box, dtype=float)
    grow = np.maximum(min_extent - (box[1] - box[0]), 0.0) / 2.0
    box[0] -= grow
    box[1] += grow
    return box


def padded_iou(a, b, min_extent):
    """3D IoU of two boxes after padding each to ``min_extent`` per axis.

    Observation boxes cover only the visible surfaces, so a camera view and a
    lidar view of one object can be thin slabs that barely intersect; the
    padding makes the overlap test tolerant to that.
    """
    return geo.aabb_iou(pad_aabb(a, min_extent), pad_aabb(b, min_extent))


def majority_id(ids):
    """Most frequent positive id (smallest on ties), or None."""
    ids = np.asarray(ids)
    ids = ids[ids > 0]
    if ids.size == 0:
        return None
    vals, counts = np.unique(ids, return_counts=True)
    return int(vals[np.argmax(counts)])
