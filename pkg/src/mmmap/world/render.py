"""Sensor rendering: analytic ray casting for the RGB-D camera and lidar,
plus noisy GNSS and IMU readings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .. import kernels

SENSOR_CODES = {"camera": 1, "lidar": 2, "gnss": 3, "imu": 4}


def noise_rng(seed, sensor, frame_index):
    """Independent counter-based stream per (seed, sensor, frame)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(SENSOR_CODES[sensor], int(frame_index)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SensorFrame:
    t: float
    index: int
    color: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, inf = no return
    instance_mask: np.ndarray  # (H, W) int32, 0 = background
    points: np.ndarray  # (N, 3) float64, lidar frame
    point_ids: np.ndarray  # (N,) int32, true body id (evaluation only)
    point_colors: np.ndarray  # (N, 3) uint8
    gnss_pose: np.ndarray | None = None
    imu_vel: np.ndarray | None = None
    imu_acc: np.ndarray | None = None


def primitives(state, spec):
    """Arrays consumed by ``kernels.cast_rays`` for the bodies present in ``state``."""
    ids = sorted(state.body_poses)
    kinds = np.array([kernels.SPHERE if spec.body(i).shape.kind == "sphere" else kernels.BOX
                      for i in ids], dtype=np.int64)
    centers = np.array([state.body_poses[i][:3, 3] for i in ids]).reshape(-1, 3)
    rots = np.array([state.body_poses[i][:3, :3] for i in ids]).reshape(-1, 3, 3)
    sizes = np.array([spec.body(i).shape.half_extents for i in ids]).reshape(-1, 3)
    colors = np.array([spec.body(i).color for i in ids]).reshape(-1, 3)
    return np.array(ids, dtype=np.int32), kinds, centers, rots, sizes, colors


def camera_rays(cam):
    """Unit pixel rays in the optical frame, shape (H*W, 3), row-major."""
    v, u = np.mgrid[0:cam.height, 0:cam.width]
    d = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u, dtype=float)], axis=-1)
    d = d.reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def lidar_rays(lidar):
    """Unit beam directions in the lidar frame, ring-major."""
    az = 2 * np.pi * np.arange(lidar.azimuth_count) / lidar.azimuth_count
    el = np.deg2rad(np.asarray(lidar.elevations_deg, dtype=float))
    E, A = np.meshgrid(el, az, indexing="ij")
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def _to_u8(colors):
    return np.clip(np.round(np.asarray(colors) * 255.0), 0, 255).astype(np.uint8)


def render_frame(state, spec, frame_index=0):
    """Render every sensor stream for one world state."""
    seed = spec.seed
    ids, kinds, centers, rots, sizes, colors = primitives(state, spec)
    cam = spec.camera

    T_wc = state.robot_pose_true @ cam.optical_to_base()
    rays = camera_rays(cam)
    dirs = rays @ T_wc[:3, :3].T
    origins = np.broadcast_to(T_wc[:3, 3], dirs.shape)
    t_hit, prim = kernels.cast_rays(origins, dirs, kinds, centers, rots, sizes)
    hit = np.isfinite(t_hit) & (t_hit <= cam.max_depth)
    depth = np.where(hit, t_hit, np.inf)
    if spec.noise.depth > 0:
        rng = noise_rng(seed, "camera", frame_index)
        noisy = depth + rng.normal(0.0, spec.noise.depth, size=depth.shape)
        depth = np.where(hit, np.maximum(noisy, 0.0), np.inf)
    mask = np.zeros(depth.shape, dtype=np.int32)
    mask[hit] = ids[prim[hit]]
    color = np.zeros((depth.shape[0], 3), dtype=np.uint8)
    color[hit] = _to_u8(colors[prim[hit]])
    H, W = cam.height, cam.width

    lid = spec.lidar
    T_wl = state.robot_pose_true @ lid.extrinsic
    beams = lidar_rays(lid)
    dirs = beams @ T_wl[:3, :3].T
    origins = np.broadcast_to(T_wl[:3, 3], dirs.shape)
    r_hit, prim = kernels.cast_rays(origins, dirs, kinds, centers, rots, sizes)
    if spec.noise.lidar_range > 0:
        rng = noise_rng(seed, "lidar", frame_index)
        r_hit = r_hit + rng.normal(0.0, spec.noise.lidar_range, size=r_hit.shape)
    keep = np.isfinite(r_hit) & (r_hit > 0) & (r_hit <= lid.max_range)
    points = beams[keep] * r_hit[keep, None]
    point_ids = ids[prim[keep]].astype(np.int32)
    point_colors = _to_u8(colors[prim[keep]]).reshape(-1, 3)

    gnss_pose = None
    if spec.gnss.available(state.t):
        rng = noise_rng(seed, "gnss", frame_index)
        T = state.robot_pose_true.copy()
        T[:3, 3] += rng.normal(0.0, spec.gnss.sigma_pos, size=3)
        T[:3, :3] = T[:3, :3] @ geo.so3_exp(rng.normal(0.0, spec.gnss.sigma_rot, size=3))
        gnss_pose = T
    rng = noise_rng(seed, "imu", frame_index)
    imu_vel = state.robot_vel_true + rng.normal(0.0, spec.imu.sigma_vel, size=3)
    imu_acc = state.robot_acc_true + rng.normal(0.0, spec.imu.sigma_acc, size=3)

    return SensorFrame(
        t=float(state.t),
        index=int(frame_index),
        color=color.reshape(H, W, 3),
        depth=depth.reshape(H, W).astype(np.float32),
        instance_mask=mask.reshape(H, W),
        points=points,
        point_ids=point_ids,
        point_colors=point_colors,
        gnss_pose=gnss_pose,
        imu_vel=imu_vel,
        imu_acc=imu_acc,
    )
