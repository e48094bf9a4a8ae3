"""Removal of lidar points that belong to moving objects."""
from __future__ import annotations

import numpy as np

from .. import geometry as geo


def dynamic_point_mask(points, point_ids=None, dynamic_ids=None, dynamic_mask=None,
                       calib=None, camera=None):
    """Boolean array marking points attributed to dynamic objects.

    Attribution is by per-point object id (``point_ids`` against
    ``dynamic_ids``) or by projecting points into a camera pixel mask, which
    needs ``calib`` and the camera intrinsics.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.zeros(pts.shape[0], dtype=bool)
    if dynamic_ids and point_ids is not None:
        out |= np.isin(np.asarray(point_ids), np.fromiter(dynamic_ids, dtype=np.int64))
    if dynamic_mask is not None and pts.shape[0]:
        if calib is None or camera is None:
            raise ValueError("projecting a pixel mask needs calib and camera")
        T = geo.pose_inv(calib.camera_to_base) @ calib.lidar_to_base
        c = geo.transform_points(T, pts)
        front = c[:, 2] > 1e-9
        z = np.where(front, c[:, 2], 1.0)
        u = np.round(camera.fx * c[:, 0] / z + camera.cx).astype(np.int64)
        v = np.round(camera.fy * c[:, 1] / z + camera.cy).astype(np.int64)
        mask = np.asarray(dynamic_mask, dtype=bool)
        inside = front & (u >= 0) & (u < mask.shape[1]) & (v >= 0) & (v < mask.shape[0])
        out[inside] |= mask[v[inside], u[inside]]
    return out


def remove_dynamic_points(points, point_ids=None, dynamic_ids=None, dynamic_mask=None,
                          calib=None, camera=None):
    """Points not attributed to dynamic objects, in their original order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts[~dynamic_point_mask(pts, point_ids, dynamic_ids, dynamic_mask, calib, camera)]


def attribute_points_to_tracks(points_world, tracks, t, params, margin=0.3):
    """Per-point track id (-1 if none) by containment in predicted track boxes.

    Only dynamic, non-lost tracks are considered; the first containing box in
    track-id order wins.
    """
    ids = np.full(points_world.shape[0], -1, dtype=np.int64)
    for tr in tracks.active():
        if not tr.is_dynamic(params):
            continue
        box, _ = tr.predicted_aabb(t, params)
        lo, hi = box[0] - margin, box[1] + margin
        inside = np.all((points_world >= lo) & (points_world <= hi), axis=1) & (ids < 0)
        ids[inside] = tr.track_id
    return ids
