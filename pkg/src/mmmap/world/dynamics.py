"""Analytic motion of bodies and the robot."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo


@dataclass
class WorldState:
    t: float
    body_poses: dict  # id -> 4x4, only bodies present at t
    robot_pose_true: np.ndarray
    robot_vel_true: np.ndarray = field(default_factory=lambda: np.zeros(3))
    robot_acc_true: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _segment(waypoints, t):
    """Index i with t_i <= t < t_{i+1}, clamped to the path ends."""
    times = [w[0] for w in waypoints]
    if t <= times[0]:
        return 0, 0.0
    if t >= times[-1]:
        return len(times) - 1, 0.0
    i = int(np.searchsorted(times, t, side="right")) - 1
    return i, (t - times[i]) / (times[i + 1] - times[i])


def interpolate_path(waypoints, t):
    """Pose along timed waypoints; holds the end poses outside the time span."""
    if not waypoints:
        return np.eye(4)
    i, u = _segment(waypoints, t)
    if i >= len(waypoints) - 1 or u == 0.0:
        return waypoints[i][1].copy()
    (t0, T0), (t1, T1) = waypoints[i], waypoints[i + 1]
    p0, q0 = geo.pose_to_pq(T0)
    p1, q1 = geo.pose_to_pq(T1)
    return geo.pose_from_pq((1 - u) * p0 + u * p1, geo.slerp(q0, q1, u))


def path_velocity(waypoints, t):
    """Right-continuous piecewise-constant velocity of a linear path."""
    if len(waypoints) < 2:
        return np.zeros(3)
    times = [w[0] for w in waypoints]
    if t < times[0] or t >= times[-1]:
        return np.zeros(3)
    i, _ = _segment(waypoints, t)
    (t0, T0), (t1, T1) = waypoints[i], waypoints[i + 1]
    return (T1[:3, 3] - T0[:3, 3]) / (t1 - t0)


def body_pose_at(body, t):
    m = body.motion
    if m.kind == "static":
        return m.pose.copy()
    if m.kind == "constant-velocity":
        T = m.pose.copy()
        T[:3, 3] = m.pose[:3, 3] + m.velocity * t
        return T
    t0 = m.waypoints[0][0]
    tau = t0 + math.fmod(t - t0, m.period)
    if tau < t0:
        tau += m.period
    loop = list(m.waypoints) + [(t0 + m.period, m.waypoints[0][1])]
    return interpolate_path(loop, tau)


def world_state_at(spec, t):
    poses = {b.id: body_pose_at(b, t) for b in spec.bodies if b.is_present(t)}
    return WorldState(
        t=float(t),
        body_poses=poses,
        robot_pose_true=interpolate_path(spec.robot_path, t),
        robot_vel_true=path_velocity(spec.robot_path, t),
        robot_acc_true=np.zeros(3),
    )


def step_world(state, spec, dt):
    """Advance the world by ``dt`` seconds; poses are closed-form in time."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return world_state_at(spec, state.t + dt)
