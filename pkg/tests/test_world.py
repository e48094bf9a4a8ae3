import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmmap import geometry as geo
from mmmap.world import (
    ScenarioError,
    load_scenario,
    read_sensor_log,
    render_frame,
    run_simulation,
    scenario_from_dict,
    step_world,
    world_state_at,
)

from conftest import box_body, scenario, sphere_body, surface_distance


def test_minimal_scenario_gets_defaults():
    spec = load_scenario(json.dumps(scenario([box_body(1, (3, 0, 0.5), (0.5, 0.5, 0.5))], 10.0, 10.0)))
    assert spec.n_frames == 100
    assert spec.camera.width == 64 and spec.camera.height == 48
    assert spec.lidar.azimuth_count == 360 and len(spec.lidar.elevations_deg) == 16
    assert spec.lidar.max_range == 50.0
    assert spec.gnss.available(123.0)
    assert spec.body(1).motion.kind == "static"


def test_duplicate_body_id_rejected():
    d = scenario([box_body(3, (1, 0, 0), (1, 1, 1)), box_body(3, (5, 0, 0), (1, 1, 1))])
    with pytest.raises(ScenarioError, match="duplicate"):
        scenario_from_dict(d)


@pytest.mark.parametrize("field,value", [("rate_hz", 0), ("duration_s", -1.0)])
def test_non_positive_timing_rejected(field, value):
    d = scenario([])
    d[field] = value
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)


def test_non_increasing_waypoints_rejected():
    d = scenario([], robot_path=[{"t": 0.0, "pose": {"t": [0, 0, 0]}}, {"t": 0.0, "pose": {"t": [1, 0, 0]}}])
    with pytest.raises(ScenarioError, match="strictly increasing"):
        scenario_from_dict(d)


def test_unknown_keys_and_parse_errors():
    with pytest.raises(ScenarioError, match="unknown keys"):
        scenario_from_dict({**scenario([]), "colour": 1})
    with pytest.raises(ScenarioError, match="parse"):
        load_scenario("{not json")
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/scenario.json")
    with pytest.raises(ScenarioError, match="missing"):
        scenario_from_dict({"duration_s": 1.0, "rate_hz": 1.0})


def test_invalid_shape_rejected():
    with pytest.raises(ScenarioError):
        scenario_from_dict(scenario([box_body(1, (0, 0, 0), (1, 0, 1))]))
    with pytest.raises(ScenarioError):
        scenario_from_dict(scenario([sphere_body(1, (0, 0, 0), -1.0)]))


def test_constant_velocity_step():
    body = box_body(1, (0, 0, 0), (0.1, 0.1, 0.1))
    body["motion"] = {"type": "constant-velocity", "pose": {"t": [0, 0, 0]}, "v": [1, 0, 0]}
    spec = scenario_from_dict(scenario([body]))
    s0 = world_state_at(spec, 0.0)
    s1 = step_world(s0, spec, 0.1)
    assert s1.t == pytest.approx(0.1)
    assert s1.body_poses[1][0, 3] - s0.body_poses[1][0, 3] == pytest.approx(0.1, abs=1e-12)


def test_static_body_unchanged():
    spec = scenario_from_dict(scenario([box_body(1, (2, 1, 0), (0.1, 0.2, 0.3), yaw=0.4)]))
    s0 = world_state_at(spec, 0.0)
    s1 = step_world(s0, spec, 3.7)
    assert np.array_equal(s0.body_poses[1], s1.body_poses[1])


def test_step_requires_positive_dt():
    spec = scenario_from_dict(scenario([]))
    with pytest.raises(ValueError):
        step_world(world_state_at(spec, 0.0), spec, 0.0)


def test_waypoint_loop_returns_to_start():
    body = box_body(1, (0, 0, 0), (0.1, 0.1, 0.1))
    body["motion"] = {"type": "waypoint-loop", "period": 4.0, "waypoints": [
        {"t": 0.0, "pose": {"t": [0, 0, 0], "yaw": 0.0}},
        {"t": 1.0, "pose": {"t": [2, 0, 0], "yaw": 1.0}},
        {"t": 2.0, "pose": {"t": [2, 2, 0], "yaw": 2.0}},
    ]}
    spec = scenario_from_dict(scenario([body]))
    start = world_state_at(spec, 0.0).body_poses[1]
    after = world_state_at(spec, 4.0).body_poses[1]
    assert np.max(np.abs(after - start)) <= 1e-9


def test_time_past_last_waypoint_holds_final_pose():
    path = [{"t": 0.0, "pose": {"t": [0, 0, 0]}}, {"t": 1.0, "pose": {"t": [3, 0, 0]}}]
    spec = scenario_from_dict(scenario([], robot_path=path))
    assert world_state_at(spec, 5.0).robot_pose_true[0, 3] == 3.0


def test_empty_world_renders_nothing():
    spec = scenario_from_dict(scenario([]))
    f = render_frame(world_state_at(spec, 0.0), spec)
    assert np.all(np.isinf(f.depth))
    assert f.points.shape == (0, 3)
    assert not f.instance_mask.any()


def test_sphere_on_optical_axis_depth():
    d, r = 5.0, 0.7
    # odd image size puts a pixel centre exactly on the optical axis
    cam = {"width": 65, "height": 49}
    spec = scenario_from_dict(scenario([sphere_body(1, (0.2 + d, 0.0, 1.0), r)], camera=cam))
    f = render_frame(world_state_at(spec, 0.0), spec)
    assert f.depth[24, 32] == pytest.approx(d - r, abs=1e-5)
    assert f.instance_mask[24, 32] == 1


def test_wall_gives_lidar_range():
    spec = scenario_from_dict(scenario([box_body(1, (11.0, 0.0, 1.0), (1.0, 50.0, 50.0))],
                                       lidar={"elevations_deg": [0.0], "azimuth_count": 8}))
    f = render_frame(world_state_at(spec, 0.0), spec)
    forward = np.isclose(f.points[:, 1], 0.0) & (f.points[:, 0] > 0)
    assert forward.sum() == 1
    assert np.linalg.norm(f.points[forward][0]) == pytest.approx(10.0, abs=1e-12)


def test_frame_count_and_roundtrip(tmp_path):
    spec = scenario_from_dict(scenario([box_body(1, (4, 0, 0.5), (0.5, 0.5, 0.5))], duration=2.0))
    sim = run_simulation(spec, tmp_path / "log")
    assert len(sim.frames) == 20
    assert len(list((tmp_path / "log").glob("frame_*.json"))) == 20
    spec2, frames, gt = read_sensor_log(tmp_path / "log")
    assert spec2.n_frames == 20 and gt == sim.ground_truth
    for a, b in zip(sim.frames, frames):
        assert np.array_equal(a.depth, b.depth) and np.array_equal(a.points, b.points)
        assert np.array_equal(a.instance_mask, b.instance_mask)


def _log_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def _noisy(seed):
    return scenario([box_body(1, (4, 0, 0.5), (0.5, 0.5, 0.5))], duration=0.5, seed=seed,
                    robot_path=[{"t": 0.0, "pose": {"t": [0, 0, 0]}}, {"t": 1.0, "pose": {"t": [1, 0, 0]}}],
                    gnss={"sigma_pos": 0.3, "sigma_rot": 0.02}, noise={"lidar_range": 0.02, "depth": 0.01},
                    imu={"sigma_vel": 0.05, "sigma_acc": 0.05})


def test_same_seed_byte_identical(tmp_path):
    run_simulation(scenario_from_dict(_noisy(3)), tmp_path / "a")
    run_simulation(scenario_from_dict(_noisy(3)), tmp_path / "b")
    assert _log_bytes(tmp_path / "a") == _log_bytes(tmp_path / "b")


def test_seed_changes_noise_not_truth():
    a = run_simulation(scenario_from_dict(_noisy(1)))
    b = run_simulation(scenario_from_dict(_noisy(2)))
    assert [r["robot_pose"] for r in a.ground_truth["frames"]] == [r["robot_pose"] for r in b.ground_truth["frames"]]
    assert not np.array_equal(a.frames[0].points, b.frames[0].points)
    assert not np.array_equal(a.frames[0].gnss_pose, b.frames[0].gnss_pose)


def test_gnss_availability_intervals():
    d = scenario([], duration=1.0, gnss={"availability": [[0.0, 0.3], [0.6, None]]})
    sim = run_simulation(scenario_from_dict(d))
    have = [f.gnss_pose is not None for f in sim.frames]
    assert have == [True, True, True, False, False, False, True, True, True, True]


_MIXED = scenario(
    [box_body(1, (0, 0, -0.05), (20, 20, 0.05), label="floor"),
     box_body(2, (4, 1, 0.5), (0.4, 0.6, 0.5), yaw=0.3),
     sphere_body(3, (5, -1.5, 0.6), 0.6)],
    duration=0.3,
    robot_path=[{"t": 0.0, "pose": {"t": [0, 0, 0]}}, {"t": 1.0, "pose": {"t": [1, 0.5, 0], "yaw": 0.5}}],
)


def test_lidar_points_lie_on_their_bodies():
    spec = scenario_from_dict(_MIXED)
    for k in range(spec.n_frames):
        state = world_state_at(spec, spec.frame_time(k))
        f = render_frame(state, spec, k)
        world = geo.transform_points(state.robot_pose_true @ spec.lidar.extrinsic, f.points)
        for p, i in zip(world, f.point_ids):
            assert abs(surface_distance(spec, int(i), state.body_poses[int(i)], p)) <= 1e-6


def test_mask_depth_consistency_and_ranges():
    spec = scenario_from_dict(_MIXED)
    f = render_frame(world_state_at(spec, 0.1), spec, 1)
    assert np.array_equal(f.instance_mask != 0, np.isfinite(f.depth))
    assert np.all(f.depth >= 0)
    assert set(np.unique(f.instance_mask)) <= {0, 1, 2, 3}
    assert np.all(np.linalg.norm(f.points, axis=1) <= spec.lidar.max_range)


@settings(max_examples=30, deadline=None)
@given(v=st.tuples(*[st.floats(-3, 3)] * 3), p0=st.tuples(*[st.floats(-10, 10)] * 3),
       t=st.floats(0, 100))
def test_constant_velocity_closed_form(v, p0, t):
    body = box_body(1, (0, 0, 0), (0.1, 0.1, 0.1))
    body["motion"] = {"type": "constant-velocity", "pose": {"t": list(p0)}, "v": list(v)}
    spec = scenario_from_dict(scenario([body]))
    pos = world_state_at(spec, t).body_poses[1][:3, 3]
    assert np.max(np.abs(pos - (np.array(p0) + np.array(v) * t))) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 20))
def test_states_are_valid_poses(t):
    spec = scenario_from_dict(_MIXED)
    s = world_state_at(spec, t)
    assert geo.is_valid_pose(s.robot_pose_true)
    assert all(geo.is_valid_pose(T) for T in s.body_poses.values())
    q = geo.pose_to_pq(s.robot_pose_true)[1]
    assert abs(np.linalg.norm(q) - 1.0) <= 1e-9
    assert not math.isnan(s.robot_vel_true.sum())
