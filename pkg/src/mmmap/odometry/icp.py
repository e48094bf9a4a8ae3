"""Point-to-point ICP with a closed-form quaternion rigid solve."""
from __future__ import annotations

import numpy as np

from .. import geometry as geo
from .. import kernels


class RegistrationError(ValueError):
    """Empty input or too few correspondences to fix a rigid transform."""


def rigid_align(src, dst):
    """Rigid transform T minimising sum |T src_i - dst_i|^2.

    Horn's method: the optimal rotation is the eigenvector of the largest
    eigenvalue of a symmetric 4x4 matrix built from the cross-covariance.
    """
    a = np.asarray(src, dtype=float)
    b = np.asarray(dst, dtype=float)
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    S = (a - ca).T @ (b - cb)
    (sxx, sxy, sxz), (syx, syy, syz), (szx, szy, szz) = S
    N = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    w, V = np.linalg.eigh(N)
    R = geo.quat_to_rot(V[:, np.argmax(w)])
    return geo.pose(R, cb - R @ ca)


def register_scans(src, dst, init=None, nn_radius=0.5, max_iter=50, tol=1e-6, grid=None):
    """Align ``src`` onto ``dst``; returns ``(T, fitness, rmse)``.

    Correspondences are nearest neighbours within ``2 * nn_radius``. Iteration
    stops when the RMSE changes by less than ``tol`` or after ``max_iter``
    rounds. ``fitness`` is the fraction of source points with a partner.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if src.shape[0] == 0 or dst.shape[0] == 0:
        raise RegistrationError("cannot register an empty cloud")
    max_dist = 2.0 * nn_radius
    grid = grid if grid is not None else kernels.GridHash(dst, max_dist)
    T = np.eye(4) if init is None else np.asarray(init, dtype=float).copy()
    prev = np.inf
    for _ in range(max_iter):
        moved = geo.transform_points(T, src)
        idx, dist = kernels.nearest_neighbors(moved, dst, max_dist, grid=grid)
        ok = idx >= 0
        if ok.sum() < 3:
            raise RegistrationError(f"only {int(ok.sum())} correspondences (need 3)")
        rmse = float(np.sqrt(np.mean(dist[ok] ** 2)))
        if abs(prev - rmse) < tol:
            break
        prev = rmse
        T = rigid_align(src[ok], dst[idx[ok]])
    moved = geo.transform_points(T, src)
    idx, dist = kernels.nearest_neighbors(moved, dst, max_dist, grid=grid)
    ok = idx >= 0
    if ok.sum() < 3:
        raise RegistrationError(f"only {int(ok.sum())} correspondences (need 3)")
    return T, float(ok.mean()), float(np.sqrt(np.mean(dist[ok] ** 2)))
