"""Error-state unscented Kalman filter over position, attitude and velocity.

The nominal state holds ``p``, a unit quaternion ``q`` and ``v``. Uncertainty
lives in a 9-dimensional tangent space ``(dp, dtheta, dv)`` where attitude
errors are right-multiplied rotation vectors: ``q_true = q * exp(dtheta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from .. import geometry as geo

N_STATE = 9
POSE_KINDS = ("gnss_pose", "icp_relative_pose")


class CovarianceError(ValueError):
    """A covariance matrix is not symmetric positive (semi)definite."""


@dataclass
class UKFParams:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    q_pos: float = 1e-5  # process noise densities per second
    q_rot: float = 0.5
    q_vel: float = 1.0
    vel_gain: float = 1.0  # pull of the velocity toward the IMU reading per step
    gate_prob: float = 0.99


@dataclass
class NavState:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    P: np.ndarray
    t: float
    n_rejected: int = 0
    last_rejected: bool = False

    @property
    def pose(self):
        return geo.pose_from_pq(self.p, self.q)


@dataclass
class MeasurementSample:
    kind: str
    value: np.ndarray  # 4x4
    noise_cov: np.ndarray  # 6x6 over (dp, dtheta)
    t: float
    reference: np.ndarray | None = None  # pose an icp relative motion is composed onto
    inflation: float = 1.0
    extras: dict = field(default_factory=dict)


def make_state(pose, v=None, P=None, t=0.0):
    p, q = geo.pose_to_pq(pose)
    return NavState(p=p, q=q, v=np.zeros(3) if v is None else np.asarray(v, float).copy(),
                    P=np.eye(N_STATE) * 1e-6 if P is None else np.asarray(P, float).copy(), t=float(t))


def _symmetrize(P):
    return 0.5 * (P + P.T)


def _sqrt_psd(M):
    """Square root S with S @ S.T == M; tolerates a tiny negative spectrum."""
    M = _symmetrize(M)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(M)
        if w.min() < -1e-9 * max(1.0, abs(w.max())):
            raise CovarianceError(f"covariance has eigenvalue {w.min():.3e}") from None
        return V * np.sqrt(np.clip(w, 0.0, None))


def _weights(n, prm):
    lam = prm.alpha ** 2 * (n + prm.kappa) - n
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - prm.alpha ** 2 + prm.beta)
    return n + lam, wm, wc


def _boxplus(p, q, v, d):
    return p + d[0:3], geo.quat_normalize(geo.quat_mul(q, geo.quat_from_rotvec(d[3:6]))), v + d[6:9]


def _rot_delta(q_ref, q):
    return geo.quat_to_rotvec(geo.quat_mul(geo.quat_conj(q_ref), q))


def _sigma_points(s, prm):
    c, wm, wc = _weights(N_STATE, prm)
    S = _sqrt_psd(c * s.P)
    pts = [(s.p, s.q, s.v)]
    for sign in (1.0, -1.0):
        for i in range(N_STATE):
            pts.append(_boxplus(s.p, s.q, s.v, sign * S[:, i]))
    return pts, wm, wc


def _tangent_stats(points, wm, wc):
    """Weighted mean and covariance of sigma points, taken around point 0."""
    p0, q0, v0 = points[0]
    D = np.array([np.concatenate([p - p0, _rot_delta(q0, q), v - v0]) for p, q, v in points])
    mean = wm[1:] @ D[1:]  # D[0] is zero
    E = D - mean
    return D, mean, (E * wc[:, None]).T @ E


def predict_state(s, imu_vel=None, imu_acc=None, dt=None, params=None):
    """Propagate the state by ``dt`` seconds through the process model.

    ``p += v dt + a dt^2 / 2`` and ``v += a dt``, then ``v`` is pulled toward
    the IMU velocity by ``vel_gain``. Attitude is left to the measurements.
    """
    prm = params or UKFParams()
    if dt is None or not dt > 0:
        raise ValueError("predict_state needs dt > 0")
    a = np.zeros(3) if imu_acc is None else np.asarray(imu_acc, dtype=float)
    pts, wm, wc = _sigma_points(s, prm)
    moved = []
    for p, q, v in pts:
        p2 = p + v * dt + 0.5 * a * dt * dt
        v2 = v + a * dt
        if imu_vel is not None:
            v2 = v2 + prm.vel_gain * (np.asarray(imu_vel, dtype=float) - v2)
        moved.append((p2, q, v2))
    _, mean, cov = _tangent_stats(moved, wm, wc)
    p, q, v = _boxplus(*moved[0], mean)
    Q = np.diag([prm.q_pos] * 3 + [prm.q_rot] * 3 + [prm.q_vel] * 3) * dt
    P = _symmetrize(cov + Q)
    return replace(s, p=p, q=q, v=v, P=P, t=s.t + dt, last_rejected=False)


def _check_spd(R):
    R = np.asarray(R, dtype=float)
    if R.shape != (6, 6) or not np.allclose(R, R.T, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise CovarianceError("measurement covariance must be a symmetric 6x6 matrix")
    if np.linalg.eigvalsh(_symmetrize(R)).min() <= 0:
        raise CovarianceError("measurement covariance must be positive definite")
    return _symmetrize(R)


def measurement_pose(m):
    """Absolute pose observed by ``m`` and its covariance."""
    R = _check_spd(m.noise_cov)
    if m.kind == "gnss_pose":
        return np.asarray(m.value, dtype=float), R
    if m.kind == "icp_relative_pose":
        if m.reference is None:
            raise ValueError("icp_relative_pose needs the reference pose it composes onto")
        return np.asarray(m.reference, dtype=float) @ m.value, R * float(m.inflation)
    raise ValueError(f"unknown measurement kind {m.kind!r}")


def fuse_measurement(s, m, params=None):
    """UKF update with an absolute pose; gated at the chi-square quantile.

    A gated-out measurement returns a copy of ``s`` with identical mean and
    covariance and ``last_rejected`` set.
    """
    prm = params or UKFParams()
    if m.t < s.t - 1e-12:
        raise ValueError("measurement precedes the state time")
    Z, R = measurement_pose(m)
    z_p, z_q = geo.pose_to_pq(Z)
    pts, wm, wc = _sigma_points(s, prm)
    D, x_mean, _ = _tangent_stats(pts, wm, wc)
    p0, q0, _ = pts[0]
    Hz = D[:, 0:6]  # the pose block of each sigma point is its observation
    z_mean = wm[1:] @ Hz[1:]
    Ez = Hz - z_mean
    Ex = D - x_mean
    Pzz = _symmetrize((Ez * wc[:, None]).T @ Ez + R)
    Pxz = (Ex * wc[:, None]).T @ Ez
    nu = np.concatenate([z_p - p0, _rot_delta(q0, z_q)]) - z_mean
    d2 = float(nu @ np.linalg.solve(Pzz, nu))
    if d2 > chi2.ppf(prm.gate_prob, 6):
        return replace(s, p=s.p.copy(), q=s.q.copy(), v=s.v.copy(), P=s.P.copy(),
                       n_rejected=s.n_rejected + 1, last_rejected=True)
    K = np.linalg.solve(Pzz, Pxz.T).T
    p, q, v = _boxplus(p0, q0, pts[0][2], x_mean + K @ nu)
    P = _symmetrize(s.P - K @ Pzz @ K.T)
    return replace(s, p=p, q=q, v=v, P=P, t=max(s.t, m.t), last_rejected=False)
