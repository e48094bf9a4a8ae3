"""End-to-end run: odometry, perception, tracking and mapping in frame order."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..mapping.map import MappingParams, MultimodalMap, export_snapshot, integrate_frame, load_map, \
    save_map, snapshot_instantaneous
from ..odometry.estimator import OdometryEstimator, OdometryParams
from ..perception.fusion import fuse_observations
from ..perception.observations import CalibrationSet
from ..perception.segmentation import ScanHistory, SegmentationParams, scan_heights, \
    segment_image_frame, segment_point_cloud
from ..perception.tracking import TrackingParams, TrackSet, track_objects
from ..world.scenario import load_scenario, scenario_from_dict, scenario_to_dict
from ..world.simulate import read_sensor_log, run_simulation
from . import evaluate as ev
from .oracles import occupancy_agreement, occupancy_oracle

SECTIONS = ("perception", "tracking", "odometry", "mapping", "retrieval")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    """A module failed while processing a frame."""

    def __init__(self, index, exc):
        super().__init__(f"frame {index}: {type(exc).__name__}: {exc}")
        self.index = index


@dataclass
class RetrievalParams:
    strategy: str = "two-stage"
    k: int = 5


@dataclass
class PipelineConfig:
    scenario: object = None  # path to a scenario JSON or sensor-log directory, or a dict
    seed: int | None = None  # overrides the scenario seed
    out_dir: str | None = None
    image_mode: str = "oracle-mask"
    sources: tuple = ("gnss", "icp", "imu")
    keyframe_stride: int | None = None
    perception: dict = field(default_factory=dict)
    tracking: dict = field(default_factory=dict)
    odometry: dict = field(default_factory=dict)
    mapping: dict = field(default_factory=dict)
    retrieval: dict = field(default_factory=dict)
    queries: object = None  # path or list of relational queries with answers
    evaluate_occupancy: bool = True

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**d)
        cfg.sources = tuple(cfg.sources)
        for name in SECTIONS:
            if not isinstance(getattr(cfg, name), dict):
                raise ConfigError(f"config section {name!r} must be an object")
        return cfg

    @classmethod
    def from_file(cls, path):
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        return cls.from_dict(json.loads(p.read_text()))


def apply_overrides(obj, overrides, section):
    """Set dataclass fields from a dict, checking names and types against the defaults."""
    for key, value in overrides.items():
        if not hasattr(obj, key) or key.startswith("_"):
            raise ConfigError(f"{section}: unknown parameter {key!r}")
        default = getattr(obj, key)
        if dataclasses.is_dataclass(default):
            apply_overrides(default, value, f"{section}.{key}")
            continue
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, (int, float)):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = type(default)(value) if ok and isinstance(default, float) else value
            ok = ok and (isinstance(default, float) or isinstance(value, int))
        elif isinstance(default, (tuple, frozenset)):
            ok = isinstance(value, (list, tuple))
            value = type(default)(value) if ok else value
        else:
            ok = default is None or isinstance(value, type(default))
        if not ok:
            raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, "
                              f"got {type(value).__name__}")
        setattr(obj, key, value)
    return obj


@dataclass
class PipelineResult:
    spec: object
    map: MultimodalMap
    snapshots: list
    trajectory: list  # PoseEstimate per frame
    track_log: list  # per frame [(track id, observed true id)]
    metrics: ev.MetricsReport
    ground_truth: dict
    runtimes: dict
    files: dict = field(default_factory=dict)


def load_inputs(cfg):
    """``(spec, frames, ground_truth)`` from a scenario or an existing sensor log."""
    src = cfg.scenario
    if src is None:
        raise ConfigError("no scenario given")
    if isinstance(src, dict):
        d = dict(src)
    else:
        p = Path(src)
        if p.is_dir():
            spec, frames, gt = read_sensor_log(p)
            if cfg.seed is not None and cfg.seed != spec.seed:
                raise ConfigError(f"sensor log was recorded with seed {spec.seed}, not {cfg.seed}")
            return spec, frames, gt
        if not p.exists():
            raise FileNotFoundError(f"scenario file not found: {p}")
        d = scenario_to_dict(load_scenario(p))
    if cfg.seed is not None:
        d["seed"] = int(cfg.seed)
    spec = scenario_from_dict(d)
    sim = run_simulation(spec)
    return spec, sim.frames, sim.ground_truth


def _load_queries(q):
    if q is None or isinstance(q, list):
        return q
    p = Path(q)
    if not p.exists():
        raise FileNotFoundError(f"query file not found: {p}")
    return json.loads(p.read_text())


def _tick(runtimes, key, t0):
    runtimes[key] = runtimes.get(key, 0.0) + time.perf_counter() - t0
    return time.perf_counter()


def run_pipeline(cfg):
    """Run every frame through odometry, perception, tracking and mapping.

    Odometry sees the tracks of the previous frame, so dynamic objects can be
    masked before scan matching; perception then uses the fresh pose.
    """
    wall = time.perf_counter()
    runtimes = {}
    spec, frames, gt = load_inputs(cfg)
    queries = _load_queries(cfg.queries)
    calib = CalibrationSet.from_scenario(spec)
    seg = apply_overrides(SegmentationParams(), cfg.perception, "perception")
    trk = apply_overrides(TrackingParams(), cfg.tracking, "tracking")
    odo = apply_overrides(OdometryParams.from_scenario(spec), cfg.odometry, "odometry")
    mp = apply_overrides(MappingParams(), cfg.mapping, "mapping")
    apply_overrides(RetrievalParams(), cfg.retrieval, "retrieval")
    if cfg.keyframe_stride is not None:
        mp.keyframe_stride = int(cfg.keyframe_stride)
    labels = spec.labels()
    odometry = OdometryEstimator(calib, odo, cfg.sources, tracking_params=trk)
    tracks = TrackSet()
    history = ScanHistory(max(seg.accumulate - 1, 0))
    m = MultimodalMap(params=mp, calib=calib, camera=spec.camera)
    snapshots, track_log = [], []
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
    for frame in frames:
        try:
            t0 = time.perf_counter()
            pose_e = odometry.step(frame, tracks)
            t0 = _tick(runtimes, "odometry", t0)
            obs_img = segment_image_frame(frame, cfg.image_mode, camera=spec.camera, calib=calib,
                                          pose=pose_e.pose, labels=labels, params=seg)
            obs_pcl = segment_point_cloud(frame.points, pose_e.pose, seg, colors=frame.point_colors,
                                          point_ids=frame.point_ids, history=history,
                                          lidar_to_base=calib.lidar_to_base)
            if seg.accumulate > 1:
                history.push(geo.transform_points(pose_e.pose @ calib.lidar_to_base, frame.points),
                             frame.point_colors, scan_heights(frame.points, None, calib.lidar_to_base))
            fused = fuse_observations(obs_img, obs_pcl, calib)
            t0 = _tick(runtimes, "perception", t0)
            track_objects(tracks, fused, pose_e, frame.t, trk)
            track_log.append(sorted((tid, fused[j].true_id) for tid, j in tracks.matched.items()))
            t0 = _tick(runtimes, "tracking", t0)
            n_places = len(m.places)
            integrate_frame(m, frame, tracks, pose_e)
            if len(m.places) > n_places:
                snap = snapshot_instantaneous(m, frame.t)
                snapshots.append(snap)
                if out is not None:
                    export_snapshot(snap, out / "snapshots", len(snapshots) - 1)
            _tick(runtimes, "mapping", t0)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PipelineError(frame.index, exc) from exc
    t0 = time.perf_counter()
    metrics = evaluate_run(spec, gt, [e.t for e, _ in odometry.history],
                           [e.pose for e, _ in odometry.history], track_log, m, queries,
                           occupancy=cfg.evaluate_occupancy)
    _tick(runtimes, "evaluation", t0)
    runtimes["total"] = time.perf_counter() - wall
    metrics.runtimes = dict(runtimes)
    res = PipelineResult(spec, m, snapshots, [e for e, _ in odometry.history], track_log, metrics, gt,
                         runtimes)
    if out is not None:
        res.files = write_outputs(res, odometry, out)
    return res


def evaluate_run(spec, gt, est_times, est_poses, track_log, m, queries=None, occupancy=True):
    """Score one run against simulator ground truth."""
    gt_frames = gt["frames"]
    if len(gt_frames) != len(est_times) or any(abs(r["t"] - t) > 1e-9 for r, t in zip(gt_frames, est_times)):
        raise ValueError("ground truth and estimate timestamps do not match")
    if len(track_log) != len(gt_frames):
        raise ValueError("track log and ground truth differ in length")
    gt_poses = [geo.pose_from_json(r["robot_pose"]) for r in gt_frames]
    background = [b.id for b in spec.bodies if b.label in SegmentationParams().background_labels]
    precision, recall = ev.track_precision_recall(track_log, ev.visible_objects(gt_frames, background))
    occ = None
    if occupancy:
        oracle = occupancy_oracle(spec, m.params.voxel_size, m.params.max_range, len(gt_frames))
        occ = occupancy_agreement(m.grid, oracle)
    times = np.array([r["t"] for r in gt_frames])

    def true_pose_at(t):
        return gt_poses[int(np.argmin(np.abs(times - t)))]

    recall_k = ev.place_recall(m.places, true_pose_at)
    grounding = None
    if queries:
        node_to_body = {nid: n.true_id for nid, n in m.graph.nodes.items()}
        grounding = ev.grounding_accuracy(m.graph, queries, "two-stage", node_to_body)
    return ev.MetricsReport(
        ate_rmse=ev.ate_rmse(est_poses, gt_poses),
        rpe_rmse=ev.rpe_rmse(est_poses, gt_poses),
        id_switches=ev.count_id_switches(track_log, background),
        track_precision=precision,
        track_recall=recall,
        occupancy_agreement=occ,
        place_recall_at1=recall_k[1],
        place_recall_at5=recall_k[5],
        grounding_top1=grounding,
        n_frames=len(gt_frames),
    )


def read_trajectory(path):
    """``(times, poses)`` from a trajectory.jsonl file."""
    times, poses = [], []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            times.append(float(rec["t"]))
            poses.append(geo.pose_from_pq(rec["p"], rec["q"]))
    return times, poses


def evaluate_outputs(run_dir, spec, gt, queries=None, occupancy=True):
    """Re-score the files written by a run (map, trajectory, tracks)."""
    run_dir = Path(run_dir)
    for name in ("map.m3dm", "trajectory.jsonl", "tracks.json"):
        if not (run_dir / name).exists():
            raise FileNotFoundError(f"run output not found: {run_dir / name}")
    m = load_map(run_dir / "map.m3dm")
    times, poses = read_trajectory(run_dir / "trajectory.jsonl")
    track_log = [[tuple(p) for p in f] for f in json.loads((run_dir / "tracks.json").read_text())]
    return evaluate_run(spec, gt, times, poses, track_log, m, _load_queries(queries), occupancy)


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1)


def write_outputs(res, odometry, out):
    """Write the map, trajectory, metrics and timings; returns file paths."""
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "map": save_map(res.map, out / "map.m3dm"),
        "trajectory": out / "trajectory.jsonl",
        "metrics": out / "metrics.json",
        "timings": out / "timings.json",
        "tracks": out / "tracks.json",
    }
    odometry.write_trajectory(files["trajectory"])
    files["metrics"].write_text(_dumps(res.metrics.to_json()))
    files["timings"].write_text(_dumps(res.runtimes))
    files["tracks"].write_text(_dumps([[list(p) for p in f] for f in res.track_log]))
    return files


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
