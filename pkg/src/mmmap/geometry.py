"""Rigid-body and box helpers shared by every module.

Poses are 4x4 homogeneous matrices (``T_parent_child``). Quaternions are
``(w, x, y, z)`` with ``w >= 0``. Axis-aligned boxes are ``(2, 3)`` arrays
holding ``[min, max]``.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_to_rot(q):
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True).as_matrix()


def rot_to_quat(R):
    q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat(scalar_first=True)
    return quat_normalize(q)


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_from_rotvec(w):
    return quat_normalize(Rotation.from_rotvec(np.asarray(w, dtype=float)).as_quat(scalar_first=True))


def quat_to_rotvec(q):
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True).as_rotvec()


def so3_exp(w):
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def so3_log(R):
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def quat_from_rpy(roll, pitch, yaw):
    return quat_normalize(
        Rotation.from_euler("xyz", [roll, pitch, yaw]).as_quat(scalar_first=True)
    )


def yaw_of(R):
    return float(np.arctan2(R[1, 0], R[0, 0]))


def slerp(q0, q1, u):
    """Spherical interpolation along the shorter arc, ``u`` in [0, 1]."""
    q0 = quat_normalize(q0)
    q1 = np.asarray(q1, dtype=float)
    if np.dot(q0, q1) < 0:
        q1 = -q1
    rel = quat_mul(quat_conj(q0), q1)
    return quat_normalize(quat_mul(q0, quat_from_rotvec(u * quat_to_rotvec(rel))))


def pose(R=None, t=None):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def pose_from_pq(p, q):
    return pose(quat_to_rot(q), p)


def pose_to_pq(T):
    return np.array(T[:3, 3], dtype=float), rot_to_quat(T[:3, :3])


def pose_inv(T):
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def transform_points(T, pts):
    pts = np.asarray(pts, dtype=float)
    return pts @ T[:3, :3].T + T[:3, 3]


def pose_error(T_a, T_b):
    """Translation (m) and rotation (rad) distance between two poses."""
    d = pose_inv(T_a) @ T_b
    return float(np.linalg.norm(d[:3, 3])), float(np.linalg.norm(so3_log(d[:3, :3])))


def is_valid_pose(T, tol=QUAT_TOL):
    T = np.asarray(T)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        return False
    R = T[:3, :3]
    return bool(
        np.allclose(R.T @ R, np.eye(3), atol=1e-6)
        and abs(np.linalg.det(R) - 1.0) < 1e-6
        and np.allclose(T[3], [0, 0, 0, 1])
    )


def pose_to_json(T):
    p, q = pose_to_pq(T)
    return {"t": [float(v) for v in p], "q": [float(v) for v in q]}


def pose_from_json(d):
    """Accepts ``{"t": [...], "q": [w,x,y,z]}``, ``"yaw"`` or ``"rpy"`` (radians)."""
    allowed = {"t", "q", "yaw", "rpy"}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown pose keys: {sorted(extra)}")
    t = np.asarray(d.get("t", [0.0, 0.0, 0.0]), dtype=float)
    if t.shape != (3,):
        raise ValueError("pose translation must have 3 components")
    if "q" in d:
        q = np.asarray(d["q"], dtype=float)
        if q.shape != (4,) or np.linalg.norm(q) == 0:
            raise ValueError("pose quaternion must be a non-zero 4-vector")
        q = quat_normalize(q)
    elif "rpy" in d:
        q = quat_from_rpy(*d["rpy"])
    else:
        q = quat_from_rpy(0.0, 0.0, float(d.get("yaw", 0.0)))
    return pose_from_pq(t, q)


# -- axis-aligned boxes ---------------------------------------------------


def aabb_from_points(pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    return np.stack([pts.min(axis=0), pts.max(axis=0)])


def aabb_volume(b):
    return float(np.prod(np.maximum(b[1] - b[0], 0.0)))


def aabb_intersection_volume(a, b):
    lo = np.maximum(a[0], b[0])
    hi = np.minimum(a[1], b[1])
    return float(np.prod(np.maximum(hi - lo, 0.0)))


def aabb_iou(a, b):
    inter = aabb_intersection_volume(a, b)
    if inter <= 0.0:
        return 0.0
    union = aabb_volume(a) + aabb_volume(b) - inter
    return inter / union if union > 0 else 0.0


def aabb_union(a, b):
    return np.stack([np.minimum(a[0], b[0]), np.maximum(a[1], b[1])])


def aabb_contains(outer, inner):
    return bool(np.all(inner[0] >= outer[0]) and np.all(inner[1] <= outer[1]))


def aabb_overlap_2d(a, b):
    """Footprint overlap area in the xy-plane."""
    lo = np.maximum(a[0, :2], b[0, :2])
    hi = np.minimum(a[1, :2], b[1, :2])
    return float(np.prod(np.maximum(hi - lo, 0.0)))


def aabb_transform(T, b):
    """AABB of the eight transformed corners of ``b``."""
    corners = np.array(
        [[b[i, 0], b[j, 1], b[k, 2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    )
    return aabb_from_points(transform_points(T, corners))
