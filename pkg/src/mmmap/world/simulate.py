"""Whole-run simulation and the on-disk sensor log."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import geometry as geo
from .dynamics import world_state_at
from .render import SensorFrame, render_frame
from .scenario import load_scenario, scenario_to_dict

PCL_DTYPE = np.dtype(
    [("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("id", "<i4"), ("r", "u1"), ("g", "u1"), ("b", "u1")]
)


@dataclass
class SimulationResult:
    spec: object
    frames: list
    ground_truth: dict


def _vec(v):
    return None if v is None else [float(x) for x in v]


def ground_truth_record(state, frame):
    ids, counts = np.unique(frame.point_ids, return_counts=True)
    pids, pcounts = np.unique(frame.instance_mask[frame.instance_mask > 0], return_counts=True)
    return {
        "index": frame.index,
        "t": state.t,
        "robot_pose": geo.pose_to_json(state.robot_pose_true),
        "robot_vel": _vec(state.robot_vel_true),
        "body_poses": {str(i): geo.pose_to_json(T) for i, T in sorted(state.body_poses.items())},
        "point_counts": {str(int(i)): int(c) for i, c in zip(ids, counts)},
        "pixel_counts": {str(int(i)): int(c) for i, c in zip(pids, pcounts)},
    }


def run_simulation(spec, out_dir=None):
    """Render ``spec.n_frames`` frames; optionally write the sensor log."""
    frames, records = [], []
    for k in range(spec.n_frames):
        state = world_state_at(spec, spec.frame_time(k))
        frame = render_frame(state, spec, frame_index=k)
        frames.append(frame)
        records.append(ground_truth_record(state, frame))
    gt = {
        "seed": spec.seed,
        "rate_hz": spec.rate_hz,
        "bodies": [{"id": b.id, "label": b.label} for b in spec.bodies],
        "frames": records,
    }
    if out_dir is not None:
        write_sensor_log(out_dir, spec, frames, gt)
    return SimulationResult(spec, frames, gt)


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_sensor_log(out_dir, spec, frames, ground_truth):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(_dumps(scenario_to_dict(spec)))
    for f in frames:
        stem = out / f"frame_{f.index:06d}"
        meta = {
            "index": f.index,
            "t": f.t,
            "height": int(f.depth.shape[0]),
            "width": int(f.depth.shape[1]),
            "n_points": int(f.points.shape[0]),
            "gnss_pose": None if f.gnss_pose is None else f.gnss_pose.tolist(),
            "imu_vel": _vec(f.imu_vel),
            "imu_acc": _vec(f.imu_acc),
        }
        Path(f"{stem}.json").write_text(_dumps(meta))
        Path(f"{stem}.depth.bin").write_bytes(np.ascontiguousarray(f.depth, dtype="<f4").tobytes())
        Path(f"{stem}.color.bin").write_bytes(np.ascontiguousarray(f.color, dtype=np.uint8).tobytes())
        Path(f"{stem}.mask.bin").write_bytes(np.ascontiguousarray(f.instance_mask, dtype="<i4").tobytes())
        rec = np.zeros(f.points.shape[0], dtype=PCL_DTYPE)
        if f.points.shape[0]:
            rec["x"], rec["y"], rec["z"] = f.points.T
            rec["id"] = f.point_ids
            rec["r"], rec["g"], rec["b"] = f.point_colors.T
        Path(f"{stem}.pcl.bin").write_bytes(rec.tobytes())
    (out / "ground_truth.json").write_text(_dumps(ground_truth))


def read_frame(log_dir, index):
    stem = Path(log_dir) / f"frame_{index:06d}"
    meta = json.loads(Path(f"{stem}.json").read_text())
    h, w = meta["height"], meta["width"]
    depth = np.frombuffer(Path(f"{stem}.depth.bin").read_bytes(), dtype="<f4").reshape(h, w).astype(np.float32)
    color = np.frombuffer(Path(f"{stem}.color.bin").read_bytes(), dtype=np.uint8).reshape(h, w, 3).copy()
    mask = np.frombuffer(Path(f"{stem}.mask.bin").read_bytes(), dtype="<i4").reshape(h, w).astype(np.int32)
    rec = np.frombuffer(Path(f"{stem}.pcl.bin").read_bytes(), dtype=PCL_DTYPE)
    gnss = meta["gnss_pose"]
    return SensorFrame(
        t=meta["t"],
        index=meta["index"],
        color=color,
        depth=depth,
        instance_mask=mask,
        points=np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64),
        point_ids=rec["id"].astype(np.int32),
        point_colors=np.stack([rec["r"], rec["g"], rec["b"]], axis=1).astype(np.uint8),
        gnss_pose=None if gnss is None else np.array(gnss, dtype=float),
        imu_vel=None if meta["imu_vel"] is None else np.array(meta["imu_vel"]),
        imu_acc=None if meta["imu_acc"] is None else np.array(meta["imu_acc"]),
    )


def read_sensor_log(log_dir):
    """Load ``(spec, frames, ground_truth)`` from a log directory."""
    log_dir = Path(log_dir)
    if not log_dir.is_dir():
        raise FileNotFoundError(f"sensor log not found: {log_dir}")
    spec = load_scenario(log_dir / "scenario.json")
    n = len(list(log_dir.glob("frame_*.json")))
    frames = [read_frame(log_dir, k) for k in range(n)]
    gt = json.loads((log_dir / "ground_truth.json").read_text())
    return spec, frames, gt
