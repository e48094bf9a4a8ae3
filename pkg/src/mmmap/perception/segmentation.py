"""Per-modality object recognition: RGB-D image segments and lidar clusters.

Both branches emit world-frame :class:`ObjectObservation` records. The image
branch has two interchangeable recognisers behind one interface: an oracle
that reads the simulator's instance mask, and a label-free depth-discontinuity
segmenter. A learned open-vocabulary recogniser would slot in as a third mode.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .. import kernels
from ..world.render import camera_rays
from .descriptors import encode_descriptor, masked_cosine
from .observations import ObjectObservation, majority_id

UNKNOWN_LABEL = "object"
BACKGROUND_LABELS = frozenset({"floor", "wall", "ground", "ceiling"})
IMAGE_MODES = ("oracle-mask", "depth-cluster")


@dataclass
class SegmentationParams:
    depth_gap: float = 0.2  # max depth step between 4-neighbours in one segment
    min_pixels: int = 4
    query_threshold: float = 0.5
    ground_z: float = 0.05
    cluster_radius: float = 0.5
    min_points: int = 5
    max_extent: float = 6.0  # larger clusters are treated as structure
    accumulate: int = 1  # number of scans merged by the point-cloud branch
    confidence_scale: float = 20.0
    background_labels: frozenset = BACKGROUND_LABELS


def as_pose(pose_e):
    """Accept a PoseEstimate-like object, a 4x4 matrix or None."""
    if pose_e is None:
        return np.eye(4)
    return np.asarray(getattr(pose_e, "pose", pose_e), dtype=float)


def _query_embedding(query):
    if query is None:
        return None
    return np.asarray(getattr(query, "embedding", query), dtype=float)


def _embed(points, colors, label):
    return encode_descriptor(points, colors, None if label == UNKNOWN_LABEL else label)


def _gate(observations, query, threshold):
    q = _query_embedding(query)
    if q is None:
        return observations
    return [o for o in observations if masked_cosine(q, o.embedding) >= threshold]


def segment_image_frame(frame, mode="oracle-mask", query=None, *, camera, calib, pose=None,
                        labels=None, params=None):
    """Segment one RGB-D frame into world-frame observations.

    ``pose`` is the base pose used for back-projection. ``labels`` maps
    instance ids to class names for the oracle mode.
    """
    p = params or SegmentationParams()
    if mode not in IMAGE_MODES:
        raise ValueError(f"unknown image segmentation mode {mode!r}")
    if frame.depth is None or frame.color is None:
        raise ValueError("image segmentation needs depth and colour channels")
    depth = np.asarray(frame.depth, dtype=float)
    H, W = depth.shape
    T_wc = as_pose(pose) @ calib.camera_to_base
    rays = camera_rays(camera).reshape(H, W, 3)
    valid = np.isfinite(depth)
    pts = np.zeros((H, W, 3))
    pts[valid] = geo.transform_points(T_wc, rays[valid] * depth[valid, None])
    labels = labels or {}

    if mode == "oracle-mask":
        seg = np.where(valid, frame.instance_mask, 0)
        ids = [int(i) for i in np.unique(seg) if i > 0]
        groups = [(i, seg == i) for i in ids]
    else:
        keep = valid & (pts[..., 2] >= p.ground_z)
        comp = kernels.depth_components(np.where(keep, depth, np.inf), p.depth_gap, p.min_pixels)
        groups = [(None, comp == c) for c in range(int(comp.max()) + 1)]

    out = []
    for body_id, m in groups:
        n = int(m.sum())
        if n < p.min_pixels:
            continue
        if body_id is not None:
            label = labels.get(body_id, UNKNOWN_LABEL)
            if label in p.background_labels:
                continue
            true_id, conf = body_id, 1.0
        else:
            label = UNKNOWN_LABEL
            true_id = majority_id(frame.instance_mask[m])
            conf = n / (n + p.confidence_scale)
        P = pts[m]
        out.append(ObjectObservation(
            source="image",
            aabb_world=geo.aabb_from_points(P),
            centroid=P.mean(axis=0),
            label=label,
            embedding=_embed(P, frame.color[m], label),
            confidence=conf,
            mask_pixels=np.argwhere(m),
            true_id=true_id,
        ))
    return _gate(out, query, p.query_threshold)


class ScanHistory:
    """Recent world-frame scans kept for point-cloud accumulation."""

    def __init__(self, maxlen):
        self.scans = deque(maxlen=max(int(maxlen), 0))

    def push(self, points_world, colors, heights=None):
        """Store a scan; ``heights`` above ground default to world z."""
        if self.scans.maxlen:
            pts = np.asarray(points_world, float)
            h = pts[:, 2] if heights is None else np.asarray(heights, float)
            self.scans.append((pts, np.asarray(colors, np.uint8), h))

    def __len__(self):
        return len(self.scans)


def scan_heights(points, world, lidar_to_base=None):
    """Height of each scan point above the ground plane.

    With the lidar mounting known this is the height in the robot base frame,
    which does not inherit attitude errors of the pose estimate; otherwise
    the world z coordinate.
    """
    if lidar_to_base is None or points.shape[0] == 0:
        return world[:, 2]
    return geo.transform_points(lidar_to_base, points)[:, 2]


def segment_point_cloud(points, pose_e=None, params=None, *, colors=None, point_ids=None,
                        history=None, lidar_to_base=None):
    """Cluster a lidar scan (sensor frame) into world-frame observations.

    With ``history`` the previous ``params.accumulate - 1`` world-frame scans
    are merged before clustering. Only clusters containing current-scan points
    are reported, and ``point_indices`` index the current scan.
    """
    p = params or SegmentationParams()
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n_cur = pts.shape[0]
    if colors is None:
        colors = np.zeros((n_cur, 3), dtype=np.uint8)
    T_ws = as_pose(pose_e) @ (np.eye(4) if lidar_to_base is None else lidar_to_base)
    world = geo.transform_points(T_ws, pts) if n_cur else pts
    all_pts, all_cols = [world], [np.asarray(colors, dtype=np.uint8).reshape(-1, 3)]
    all_h = [scan_heights(pts, world, lidar_to_base)]
    if history is not None and p.accumulate > 1:
        for hp, hc, hh in list(history.scans)[-(p.accumulate - 1):]:
            all_pts.append(hp)
            all_cols.append(hc)
            all_h.append(hh)
    P = np.concatenate(all_pts)
    C = np.concatenate(all_cols)
    src_index = np.concatenate([np.arange(n_cur), np.full(P.shape[0] - n_cur, -1)])
    above = np.concatenate(all_h) >= p.ground_z
    P, C, src_index = P[above], C[above], src_index[above]
    if P.shape[0] == 0:
        return []
    lab = kernels.euclidean_clusters(P, p.cluster_radius, p.min_points)
    out = []
    for c in range(int(lab.max()) + 1):
        m = lab == c
        cur = src_index[m]
        cur = cur[cur >= 0]
        if cur.size == 0:
            continue
        Q = P[m]
        box = geo.aabb_from_points(Q)
        if np.max(box[1] - box[0]) > p.max_extent:
            continue
        n = int(m.sum())
        out.append(ObjectObservation(
            source="pointcloud",
            aabb_world=box,
            centroid=Q.mean(axis=0),
            label=UNKNOWN_LABEL,
            embedding=_embed(Q, C[m], UNKNOWN_LABEL),
            confidence=n / (n + p.confidence_scale),
            point_indices=np.sort(cur),
            true_id=None if point_ids is None else majority_id(np.asarray(point_ids)[cur]),
        ))
    return out
