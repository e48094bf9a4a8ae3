"""Deterministic synthetic world: bodies, robot path and sensor streams."""
from .dynamics import WorldState, body_pose_at, interpolate_path, step_world, world_state_at
from .render import SensorFrame, noise_rng, render_frame
from .scenario import (
    CameraSpec,
    GnssSpec,
    ImuSpec,
    LidarSpec,
    NoiseSpec,
    RigidBody,
    ScenarioError,
    ScenarioSpec,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .simulate import SimulationResult, read_sensor_log, run_simulation, write_sensor_log

__all__ = [
    "CameraSpec", "GnssSpec", "ImuSpec", "LidarSpec", "NoiseSpec", "RigidBody", "ScenarioError",
    "ScenarioSpec", "SensorFrame", "SimulationResult", "WorldState", "body_pose_at",
    "interpolate_path", "load_scenario", "noise_rng", "read_sensor_log", "render_frame",
    "run_simulation", "scenario_from_dict", "scenario_to_dict", "step_world", "world_state_at",
    "write_sensor_log",
]
