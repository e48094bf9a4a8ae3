"""Scenario schema: bodies, robot path and sensor rigs, loaded from JSON."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


# camera optical frame (z forward, x right, y down) -> camera body frame (x forward, z up)
OPTICAL_TO_BODY = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])

TOP_KEYS = {"seed", "duration_s", "rate_hz", "bodies", "robot_path", "camera", "lidar", "gnss", "imu", "noise"}
REQUIRED_TOP = {"duration_s", "rate_hz", "bodies"}


@dataclass
class Shape:
    kind: str  # "box" | "sphere"
    half_extents: np.ndarray  # (3,); for spheres all entries equal the radius

    @property
    def radius(self):
        return float(self.half_extents[0])


@dataclass
class Motion:
    kind: str  # "static" | "constant-velocity" | "waypoint-loop"
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    waypoints: list = field(default_factory=list)  # [(t, T)]
    period: float = 0.0


@dataclass
class RigidBody:
    id: int
    shape: Shape
    color: np.ndarray
    label: str = "object"
    motion: Motion = field(default_factory=lambda: Motion("static"))
    interactive_state: bool | None = None
    present: tuple = (0.0, math.inf)

    def is_present(self, t):
        return self.present[0] <= t < self.present[1]


@dataclass
class CameraSpec:
    fx: float = 50.0
    fy: float = 50.0
    cx: float = 31.5
    cy: float = 23.5
    width: int = 64
    height: int = 48
    max_depth: float = 50.0
    extrinsic: np.ndarray = field(default_factory=lambda: geo.pose(t=[0.2, 0.0, 1.0]))

    def optical_to_base(self):
        """Pose of the optical frame in the robot base frame."""
        return self.extrinsic @ geo.pose(OPTICAL_TO_BODY)


@dataclass
class LidarSpec:
    azimuth_count: int = 360
    elevations_deg: tuple = tuple(np.linspace(-15.0, 15.0, 16))
    max_range: float = 50.0
    extrinsic: np.ndarray = field(default_factory=lambda: geo.pose(t=[0.0, 0.0, 1.0]))


@dataclass
class GnssSpec:
    sigma_pos: float = 0.0
    sigma_rot: float = 0.0
    availability: list = field(default_factory=lambda: [(0.0, math.inf)])

    def available(self, t):
        return any(a <= t < b for a, b in self.availability)


@dataclass
class ImuSpec:
    sigma_vel: float = 0.0
    sigma_acc: float = 0.0


@dataclass
class NoiseSpec:
    lidar_range: float = 0.0
    depth: float = 0.0


@dataclass
class ScenarioSpec:
    duration_s: float
    rate_hz: float
    bodies: list
    seed: int = 0
    robot_path: list = field(default_factory=list)  # [(t, T)]
    camera: CameraSpec = field(default_factory=CameraSpec)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    gnss: GnssSpec = field(default_factory=GnssSpec)
    imu: ImuSpec = field(default_factory=ImuSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def n_frames(self):
        return int(math.ceil(self.duration_s * self.rate_hz - 1e-9))

    def frame_time(self, k):
        return k / self.rate_hz

    def body(self, body_id):
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise KeyError(body_id)

    def labels(self):
        return {b.id: b.label for b in self.bodies}


# -- parsing --------------------------------------------------------------


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)}")


def _pose(d, where):
    try:
        return geo.pose_from_json(d)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _positive(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{name} must be a number") from None
    if not value > 0:
        raise ScenarioError(f"{name} must be > 0, got {value}")
    return value


def _nonneg(value, name):
    value = float(value)
    if value < 0:
        raise ScenarioError(f"{name} must be >= 0")
    return value


def _interval(item, where):
    if not isinstance(item, (list, tuple)) or len(item) != 2:
        raise ScenarioError(f"{where}: interval must be [t_on, t_off]")
    a = 0.0 if item[0] is None else float(item[0])
    b = math.inf if item[1] is None else float(item[1])
    if b < a:
        raise ScenarioError(f"{where}: t_off < t_on")
    return (a, b)


def _waypoints(items, where):
    out = []
    for i, w in enumerate(items):
        _check_keys(w, {"t", "pose"}, f"{where}[{i}]")
        if "t" not in w:
            raise ScenarioError(f"{where}[{i}]: missing required field 't'")
        out.append((float(w["t"]), _pose(w.get("pose", {}), f"{where}[{i}]")))
    times = [t for t, _ in out]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScenarioError(f"{where}: waypoint times must be strictly increasing")
    return out


def _parse_shape(d, where):
    _check_keys(d, {"box", "sphere"}, where)
    if len(d) != 1:
        raise ScenarioError(f"{where}: shape needs exactly one of box/sphere")
    if "box" in d:
        half = np.asarray(d["box"], dtype=float)
        if half.shape != (3,) or np.any(half <= 0):
            raise ScenarioError(f"{where}: box half-extents must be 3 positive numbers")
        return Shape("box", half)
    r = _positive(d["sphere"], f"{where}.sphere")
    return Shape("sphere", np.full(3, r))


def _parse_motion(d, where):
    _check_keys(d, {"type", "pose", "v", "waypoints", "period"}, where)
    kind = d.get("type", "static")
    if kind == "static":
        return Motion("static", pose=_pose(d.get("pose", {}), where))
    if kind == "constant-velocity":
        v = np.asarray(d.get("v", [0, 0, 0]), dtype=float)
        if v.shape != (3,):
            raise ScenarioError(f"{where}: v must have 3 components")
        return Motion("constant-velocity", pose=_pose(d.get("pose", {}), where), velocity=v)
    if kind == "waypoint-loop":
        wps = _waypoints(d.get("waypoints", []), f"{where}.waypoints")
        if len(wps) < 2:
            raise ScenarioError(f"{where}: waypoint-loop needs at least 2 waypoints")
        span = wps[-1][0] - wps[0][0]
        # default closing leg takes the mean segment duration
        period = float(d.get("period", span + span / (len(wps) - 1)))
        if period <= span:
            raise ScenarioError(f"{where}: period must exceed the waypoint span")
        return Motion("waypoint-loop", waypoints=wps, period=period)
    raise ScenarioError(f"{where}: unknown motion type {kind!r}")


def _parse_body(d, where):
    _check_keys(d, {"id", "shape", "color", "label", "motion", "interactive_state", "present"}, where)
    for key in ("id", "shape"):
        if key not in d:
            raise ScenarioError(f"{where}: missing required field {key!r}")
    color = np.asarray(d.get("color", [0.5, 0.5, 0.5]), dtype=float)
    if color.shape != (3,) or np.any(color < 0) or np.any(color > 1):
        raise ScenarioError(f"{where}: color must be an RGB triple in [0, 1]")
    body_id = int(d["id"])
    if body_id <= 0:
        raise ScenarioError(f"{where}: body ids must be positive (0 marks background)")
    return RigidBody(
        id=body_id,
        shape=_parse_shape(d["shape"], f"{where}.shape"),
        color=color,
        label=str(d.get("label", "object")),
        motion=_parse_motion(d.get("motion", {}), f"{where}.motion"),
        interactive_state=d.get("interactive_state"),
        present=_interval(d.get("present", [0.0, None]), f"{where}.present"),
    )


def _parse_camera(d):
    _check_keys(d, {"fx", "fy", "cx", "cy", "width", "height", "max_depth", "extrinsic"}, "camera")
    cam = CameraSpec()
    width = int(d.get("width", cam.width))
    height = int(d.get("height", cam.height))
    if width < 1 or height < 1:
        raise ScenarioError("camera width/height must be >= 1")
    return CameraSpec(
        fx=_positive(d.get("fx", cam.fx), "camera.fx"),
        fy=_positive(d.get("fy", cam.fy), "camera.fy"),
        cx=float(d.get("cx", (width - 1) / 2)),
        cy=float(d.get("cy", (height - 1) / 2)),
        width=width,
        height=height,
        max_depth=_positive(d.get("max_depth", cam.max_depth), "camera.max_depth"),
        extrinsic=_pose(d["extrinsic"], "camera.extrinsic") if "extrinsic" in d else cam.extrinsic,
    )


def _parse_lidar(d):
    _check_keys(d, {"azimuth_count", "elevations_deg", "rings", "min_elevation_deg",
                    "max_elevation_deg", "max_range", "extrinsic"}, "lidar")
    lid = LidarSpec()
    if "elevations_deg" in d:
        elev = tuple(float(e) for e in d["elevations_deg"])
    else:
        rings = int(d.get("rings", 16))
        elev = tuple(np.linspace(float(d.get("min_elevation_deg", -15.0)),
                                 float(d.get("max_elevation_deg", 15.0)), rings))
    az = int(d.get("azimuth_count", lid.azimuth_count))
    if az < 1 or not elev:
        raise ScenarioError("lidar needs >= 1 azimuth and >= 1 ring")
    return LidarSpec(
        azimuth_count=az,
        elevations_deg=elev,
        max_range=_positive(d.get("max_range", lid.max_range), "lidar.max_range"),
        extrinsic=_pose(d["extrinsic"], "lidar.extrinsic") if "extrinsic" in d else lid.extrinsic,
    )


def _parse_gnss(d):
    _check_keys(d, {"sigma_pos", "sigma_rot", "availability"}, "gnss")
    avail = d.get("availability")
    return GnssSpec(
        sigma_pos=_nonneg(d.get("sigma_pos", 0.0), "gnss.sigma_pos"),
        sigma_rot=_nonneg(d.get("sigma_rot", 0.0), "gnss.sigma_rot"),
        availability=[(0.0, math.inf)] if avail is None
        else [_interval(a, "gnss.availability") for a in avail],
    )


def _parse_imu(d):
    _check_keys(d, {"sigma_vel", "sigma_acc"}, "imu")
    return ImuSpec(
        sigma_vel=_nonneg(d.get("sigma_vel", 0.0), "imu.sigma_vel"),
        sigma_acc=_nonneg(d.get("sigma_acc", 0.0), "imu.sigma_acc"),
    )


def _parse_noise(d):
    _check_keys(d, {"lidar_range", "depth"}, "noise")
    return NoiseSpec(
        lidar_range=_nonneg(d.get("lidar_range", 0.0), "noise.lidar_range"),
        depth=_nonneg(d.get("depth", 0.0), "noise.depth"),
    )


def scenario_from_dict(d):
    _check_keys(d, TOP_KEYS, "scenario")
    missing = REQUIRED_TOP - set(d)
    if missing:
        raise ScenarioError(f"scenario: missing required field(s) {sorted(missing)}")
    bodies = [_parse_body(b, f"bodies[{i}]") for i, b in enumerate(d["bodies"])]
    ids = [b.id for b in bodies]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ScenarioError(f"duplicate body id(s): {dup}")
    return ScenarioSpec(
        duration_s=_positive(d["duration_s"], "duration_s"),
        rate_hz=_positive(d["rate_hz"], "rate_hz"),
        bodies=bodies,
        seed=int(d.get("seed", 0)),
        robot_path=_waypoints(d.get("robot_path", []), "robot_path"),
        camera=_parse_camera(d.get("camera", {})),
        lidar=_parse_lidar(d.get("lidar", {})),
        gnss=_parse_gnss(d.get("gnss", {})),
        imu=_parse_imu(d.get("imu", {})),
        noise=_parse_noise(d.get("noise", {})),
    )


def load_scenario(source):
    """Parse a scenario from JSON text, a dict, or a path to a JSON file."""
    if isinstance(source, dict):
        return scenario_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"scenario file not found: {path}")
        source = path.read_text()
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario parse failure: {exc}") from None
    return scenario_from_dict(data)


def _interval_json(a, b):
    return [a, None if math.isinf(b) else b]


def _motion_to_dict(m):
    if m.kind == "static":
        return {"type": "static", "pose": geo.pose_to_json(m.pose)}
    if m.kind == "constant-velocity":
        return {"type": "constant-velocity", "pose": geo.pose_to_json(m.pose),
                "v": [float(x) for x in m.velocity]}
    return {"type": "waypoint-loop", "period": m.period,
            "waypoints": [{"t": t, "pose": geo.pose_to_json(T)} for t, T in m.waypoints]}


def scenario_to_dict(spec):
    """Inverse of ``scenario_from_dict`` (poses re-expressed as t/q)."""
    bodies = []
    for b in spec.bodies:
        shape = ({"sphere": b.shape.radius} if b.shape.kind == "sphere"
                 else {"box": [float(x) for x in b.shape.half_extents]})
        d = {"id": b.id, "shape": shape, "color": [float(x) for x in b.color], "label": b.label,
             "motion": _motion_to_dict(b.motion), "present": _interval_json(*b.present)}
        if b.interactive_state is not None:
            d["interactive_state"] = b.interactive_state
        bodies.append(d)
    cam, lid = spec.camera, spec.lidar
    return {
        "seed": spec.seed,
        "duration_s": spec.duration_s,
        "rate_hz": spec.rate_hz,
        "bodies": bodies,
        "robot_path": [{"t": t, "pose": geo.pose_to_json(T)} for t, T in spec.robot_path],
        "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy, "width": cam.width,
                   "height": cam.height, "max_depth": cam.max_depth,
                   "extrinsic": geo.pose_to_json(cam.extrinsic)},
        "lidar": {"azimuth_count": lid.azimuth_count,
                  "elevations_deg": [float(e) for e in lid.elevations_deg],
                  "max_range": lid.max_range, "extrinsic": geo.pose_to_json(lid.extrinsic)},
        "gnss": {"sigma_pos": spec.gnss.sigma_pos, "sigma_rot": spec.gnss.sigma_rot,
                 "availability": [_interval_json(a, b) for a, b in spec.gnss.availability]},
        "imu": {"sigma_vel": spec.imu.sigma_vel, "sigma_acc": spec.imu.sigma_acc},
        "noise": {"lidar_range": spec.noise.lidar_range, "depth": spec.noise.depth},
    }
