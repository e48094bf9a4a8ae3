"""Ground-truth replays used to score the pipeline.

The occupancy oracle re-casts noiseless lidar beams from the true sensor
poses against the true body geometry and walks each beam by sorting its
voxel-plane crossings, a different traversal from the mapping kernel.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..mapping.voxels import L_HIT, L_MAX, L_MIN, L_MISS
from ..world.dynamics import world_state_at
from ..world.render import lidar_rays, primitives


def _axis_crossings(o, e, voxel):
    """(ray index, t) of every plane crossing along one axis."""
    i0 = np.floor(o / voxel).astype(np.int64)
    i1 = np.floor(e / voxel).astype(np.int64)
    n = np.abs(i1 - i0)
    rays = np.repeat(np.arange(o.size), n)
    if rays.size == 0:
        return rays, np.zeros(0)
    start = np.repeat(np.cumsum(n) - n, n)
    k = np.arange(rays.size) - start
    up = (i1 > i0)[rays]
    plane = np.where(up, i0[rays] + 1 + k, i0[rays] - k) * voxel
    return rays, (plane - o[rays]) / (e[rays] - o[rays])


def ray_voxels(origins, ends, voxel):
    """Traversed voxel indices (before the end voxel) and end voxel indices.

    Returns ``(free_ijk, end_ijk)`` as integer arrays.
    """
    origins = np.asarray(origins, dtype=float)
    ends = np.asarray(ends, dtype=float)
    n = origins.shape[0]
    rays = [np.arange(n), np.arange(n)]
    ts = [np.zeros(n), np.ones(n)]
    for a in range(3):
        r, t = _axis_crossings(origins[:, a], ends[:, a], voxel)
        rays.append(r)
        ts.append(t)
    rays = np.concatenate(rays)
    ts = np.clip(np.concatenate(ts), 0.0, 1.0)
    order = np.lexsort((ts, rays))
    rays, ts = rays[order], ts[order]
    same = rays[1:] == rays[:-1]
    lo, hi, ray = ts[:-1][same], ts[1:][same], rays[:-1][same]
    keep = hi > lo
    lo, hi, ray = lo[keep], hi[keep], ray[keep]
    mid = 0.5 * (lo + hi)
    pts = origins[ray] + mid[:, None] * (ends[ray] - origins[ray])
    ijk = np.floor(pts / voxel).astype(np.int64)
    end_ijk = np.floor(ends / voxel).astype(np.int64)
    free = np.any(ijk != end_ijk[ray], axis=1)
    return ijk[free], end_ijk


def occupancy_oracle(spec, voxel_size, max_range, n_frames=None):
    """``{packed key: log-odds}`` from a noiseless replay of the lidar."""
    beams = lidar_rays(spec.lidar)
    lo = {}
    n = spec.n_frames if n_frames is None else n_frames
    for k in range(n):
        state = world_state_at(spec, spec.frame_time(k))
        _, kinds, centers, rots, sizes, _ = primitives(state, spec)
        T = state.robot_pose_true @ spec.lidar.extrinsic
        dirs = beams @ T[:3, :3].T
        origins = np.broadcast_to(T[:3, 3], dirs.shape)
        r, _ = kernels.cast_rays(origins, dirs, kinds, centers, rots, sizes)
        ok = np.isfinite(r) & (r > 0) & (r <= spec.lidar.max_range) & (r <= max_range)
        o = origins[ok]
        e = o + dirs[ok] * r[ok, None]
        free, end = ray_voxels(o, e, voxel_size)
        keys = np.concatenate([kernels.pack_keys(end), kernels.pack_keys(free)])
        w = np.concatenate([np.full(end.shape[0], L_HIT), np.full(free.shape[0], L_MISS)])
        uk, inv = np.unique(keys, return_inverse=True)
        delta = np.bincount(inv, weights=w, minlength=uk.size)
        for key, dl in zip(uk.tolist(), delta.tolist()):
            lo[key] = min(max(lo.get(key, 0.0) + dl, L_MIN), L_MAX)
    return lo


def occupancy_agreement(grid, oracle):
    """Fraction of voxels touched by either grid whose occupied/free state agrees."""
    est = dict(zip(grid.keys.tolist(), grid.log_odds.tolist()))
    keys = set(est) | set(oracle)
    if not keys:
        raise ValueError("no voxels to compare")
    agree = sum((est.get(k, 0.0) > 0) == (oracle.get(k, 0.0) > 0) for k in keys)
    return agree / len(keys)
