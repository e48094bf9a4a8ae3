"""Frame-by-frame odometry: lidar ICP, IMU propagation and GNSS fixes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .. import geometry as geo
from .. import kernels
from ..perception.tracking import TrackingParams
from .dynamic import attribute_points_to_tracks, remove_dynamic_points
from .icp import RegistrationError, register_scans
from .ukf import MeasurementSample, UKFParams, fuse_measurement, make_state, predict_state

SOURCES = frozenset({"gnss", "icp", "imu"})
COV_FLOOR = 1e-12


@dataclass
class PoseEstimate:
    pose: np.ndarray
    cov: np.ndarray  # 6x6 over (dp, dtheta)
    t: float
    sources_used: frozenset = frozenset()


@dataclass
class OdometryParams:
    ukf: UKFParams = field(default_factory=UKFParams)
    gnss_sigma_pos: float = 0.3
    gnss_sigma_rot: float = 0.02
    imu_sigma_vel: float = 0.05
    icp_sigma_pos: float = 0.03
    icp_sigma_rot: float = 0.005
    icp_inflation_rate: float = 0.02  # variance growth per chained ICP step
    nn_radius: float = 0.5
    ground_z: float = 0.2  # points lower than this in the base frame skip ICP
    downsample: float = 0.1
    min_fitness: float = 0.3
    dynamic_margin: float = 0.3
    remove_dynamic: bool = True
    initial_sigma: float = 1e-3
    planar: bool = True  # ground vehicle: keep only x, y and yaw of scan-matched motion

    @classmethod
    def from_scenario(cls, spec, **overrides):
        p = cls(
            gnss_sigma_pos=spec.gnss.sigma_pos,
            gnss_sigma_rot=spec.gnss.sigma_rot,
            imu_sigma_vel=spec.imu.sigma_vel,
        )
        for k, v in overrides.items():
            setattr(p, k, v)
        return p


def gnss_cov(params):
    return np.diag([max(params.gnss_sigma_pos ** 2, COV_FLOOR)] * 3
                   + [max(params.gnss_sigma_rot ** 2, COV_FLOOR)] * 3)


def icp_cov(params):
    return np.diag([params.icp_sigma_pos ** 2] * 3 + [params.icp_sigma_rot ** 2] * 3)


def _sym(P):
    return 0.5 * (P + P.T)


def _without_pose_block(P):
    """Covariance with the pose rows and columns (and their coupling) removed."""
    out = np.zeros_like(P)
    out[6:, 6:] = P[6:, 6:]
    return out


def planar_motion(T):
    """Project a rigid motion onto the ground plane (x, y translation and yaw)."""
    yaw = geo.yaw_of(T[:3, :3])
    return geo.pose(geo.quat_to_rot(geo.quat_from_rpy(0.0, 0.0, yaw)), [T[0, 3], T[1, 3], 0.0])


def downsample(points, voxel):
    """First point (in input order) of every occupied voxel."""
    if voxel <= 0 or points.shape[0] == 0:
        return points
    keys = kernels.pack_keys(kernels.cell_indices(points, voxel))
    _, first = np.unique(keys, return_index=True)
    return points[np.sort(first)]


class OdometryEstimator:
    """Stateful per-run odometry.

    ``sources`` picks the inputs: any subset of ``{"gnss", "icp", "imu"}``.
    Without ``imu`` the velocity follows a constant-velocity model.
    """

    def __init__(self, calib, params=None, sources=SOURCES, origin=None, tracking_params=None):
        unknown = set(sources) - SOURCES
        if unknown:
            raise ValueError(f"unknown odometry sources {sorted(unknown)}")
        self.calib = calib
        self.params = params or OdometryParams()
        self.sources = frozenset(sources)
        self.origin = np.eye(4) if origin is None else np.asarray(origin, float)
        self.tracking_params = tracking_params or TrackingParams()
        self.state = None
        self.prev_scan = None
        self.chain = 0  # ICP compositions since the last accepted GNSS fix
        self.history = []

    def _ukf_params(self, dt):
        u = self.params.ukf
        q_vel = max(self.params.imu_sigma_vel ** 2, COV_FLOOR) / dt if "imu" in self.sources else u.q_vel
        return UKFParams(u.alpha, u.beta, u.kappa, u.q_pos, u.q_rot, q_vel, u.vel_gain, u.gate_prob)

    def static_points(self, frame, tracks, pose_guess):
        """Scan points (lidar frame) with dynamic-track points removed."""
        pts = frame.points
        if not self.params.remove_dynamic or tracks is None or pts.shape[0] == 0:
            return pts
        world = geo.transform_points(pose_guess @ self.calib.lidar_to_base, pts)
        ids = attribute_points_to_tracks(world, tracks, frame.t, self.tracking_params,
                                         self.params.dynamic_margin)
        dyn = {int(i) for i in np.unique(ids) if i >= 0}
        return remove_dynamic_points(pts, ids, dyn)

    def _icp_cloud(self, pts):
        z = geo.transform_points(self.calib.lidar_to_base, pts)[:, 2] if pts.shape[0] else np.zeros(0)
        return downsample(pts[z >= self.params.ground_z], self.params.downsample)

    def _first(self, frame, tracks):
        used = set()
        P0 = np.eye(9) * self.params.initial_sigma ** 2
        if "gnss" in self.sources and frame.gnss_pose is not None:
            pose = frame.gnss_pose
            P0[:6, :6] = gnss_cov(self.params)
            used.add("gnss")
        else:
            pose = self.origin
        v = None
        if "imu" in self.sources and frame.imu_vel is not None:
            v = frame.imu_vel
            used.add("imu")
        self.state = make_state(pose, v=v, P=P0, t=frame.t)
        self.prev_scan = self._icp_cloud(self.static_points(frame, tracks, pose))
        return used

    def step(self, frame, tracks=None):
        """Estimate the pose at ``frame.t``; returns a :class:`PoseEstimate`."""
        if self.state is None:
            used = self._first(frame, tracks)
        else:
            used = self._advance(frame, tracks)
        s = self.state
        est = PoseEstimate(pose=s.pose, cov=s.P[:6, :6].copy(), t=frame.t, sources_used=frozenset(used))
        self.history.append((est, np.diag(s.P).copy()))
        return est

    def _advance(self, frame, tracks):
        prev = self.state
        dt = frame.t - prev.t
        if not dt > 0:
            raise ValueError(f"frame time {frame.t} does not advance past {prev.t}")
        prm = self._ukf_params(dt)
        used = set()
        imu = "imu" in self.sources and frame.imu_vel is not None
        vel = frame.imu_vel if imu else None
        acc = frame.imu_acc if imu else None
        if imu:
            used.add("imu")
        s = predict_state(prev, vel, acc, dt, prm)
        scan = self._icp_cloud(self.static_points(frame, tracks, s.pose))
        rel = self._register(scan, prev.pose, s.pose) if "icp" in self.sources else None
        if rel is not None:
            self.chain += 1
            m = MeasurementSample("icp_relative_pose", rel, icp_cov(self.params), frame.t,
                                  reference=prev.pose,
                                  inflation=1.0 + self.params.icp_inflation_rate * self.chain)
            # Fuse the relative motion with the previous pose held fixed, then
            # add the previous pose uncertainty back: relative measurements
            # cannot shrink absolute uncertainty.
            local = predict_state(replace(prev, P=_without_pose_block(prev.P)), vel, acc, dt, prm)
            fused = fuse_measurement(local, m, prm)
            if not fused.last_rejected:
                s = replace(fused, P=_sym(fused.P + s.P - local.P), n_rejected=s.n_rejected)
                used.add("icp")
            else:
                s = replace(s, n_rejected=s.n_rejected + 1, last_rejected=True)
        if "gnss" in self.sources and frame.gnss_pose is not None:
            s = fuse_measurement(s, MeasurementSample("gnss_pose", frame.gnss_pose, gnss_cov(self.params),
                                                      frame.t), prm)
            if not s.last_rejected:
                used.add("gnss")
                self.chain = 0
        self.state = s
        self.prev_scan = scan
        return used

    def _register(self, scan, prev_pose, pred_pose):
        """Relative base motion from the previous scan to ``scan``, or None."""
        if self.prev_scan is None or scan.shape[0] < 3 or self.prev_scan.shape[0] < 3:
            return None
        E = self.calib.lidar_to_base
        guess = geo.pose_inv(E) @ geo.pose_inv(prev_pose) @ pred_pose @ E
        try:
            T, fitness, _ = register_scans(scan, self.prev_scan, guess, self.params.nn_radius)
        except RegistrationError:
            return None
        if fitness < self.params.min_fitness:
            return None
        rel = E @ T @ geo.pose_inv(E)
        if self.params.planar:
            rel = planar_motion(rel)
        return rel

    def write_trajectory(self, path):
        with open(path, "w") as fh:
            for est, diag in self.history:
                fh.write(json.dumps(trajectory_record(est, diag), sort_keys=True) + "\n")


def trajectory_record(est, cov_diag):
    p, q = geo.pose_to_pq(est.pose)
    return {
        "t": est.t,
        "p": [float(x) for x in p],
        "q": [float(x) for x in q],
        "cov_diag": [float(x) for x in cov_diag],
        "sources_used": sorted(est.sources_used),
    }


def estimate_odometry(frame, prev_frame, tracks, state, *, calib, params=None, sources=SOURCES):
    """One-shot step from ``state`` (the estimate at ``prev_frame``).

    Returns ``(PoseEstimate, NavState)``. With ``state=None`` the first-frame
    rule applies: the GNSS pose if available, else the origin.
    """
    est = OdometryEstimator(calib, params, sources)
    if state is None:
        return est.step(frame, tracks), est.state
    if not state.t < frame.t:
        raise ValueError("state must precede the frame")
    est.state = state
    if prev_frame is not None:
        est.prev_scan = est._icp_cloud(est.static_points(prev_frame, tracks, state.pose))
    return est.step(frame, tracks), est.state
