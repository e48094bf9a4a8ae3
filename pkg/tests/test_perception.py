import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmmap import geometry as geo
from mmmap.perception import (
    FORBIDDEN,
    CalibrationSet,
    InfeasibleAssignment,
    ObjectObservation,
    ScanHistory,
    SegmentationParams,
    TrackingParams,
    TrackSet,
    cosine,
    encode_descriptor,
    fuse_observations,
    segment_image_frame,
    segment_point_cloud,
    solve_assignment,
    track_objects,
)
from mmmap.perception.assignment import assignment_cost
from mmmap.perception.descriptors import DIM
from mmmap.perception.tracking import CONFIRMED, LOST, TENTATIVE, TrackingParams, association_cost, cost_matrix
from mmmap.world import render_frame, scenario_from_dict, world_state_at

from conftest import box_body, scenario


def obs(lo, hi, label="box", emb_label=None, **kw):
    box = np.array([lo, hi], dtype=float)
    return ObjectObservation(source=kw.pop("source", "image"), aabb_world=box, centroid=box.mean(axis=0),
                             label=label, embedding=encode_descriptor(label=emb_label or label), **kw)


# -- descriptors ---------------------------------------------------------------


def test_descriptor_deterministic_and_unit(rng):
    pts = rng.normal(size=(50, 3))
    cols = rng.integers(0, 256, (50, 3), dtype=np.uint8)
    a = encode_descriptor(pts, cols, "red chair")
    b = encode_descriptor(pts, cols, "red chair")
    assert a.shape == (DIM,) and DIM == 61
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) <= 1e-6


def test_label_descriptor_similarity():
    assert cosine(encode_descriptor(label="red chair"), encode_descriptor(label="red chair")) == pytest.approx(1.0)
    assert cosine(encode_descriptor(label="red chair"), encode_descriptor(label="blue door")) < 1.0


def test_descriptor_needs_input():
    with pytest.raises(ValueError):
        encode_descriptor()
    with pytest.raises(ValueError):
        encode_descriptor(points=np.zeros((0, 3)), label="")


# -- image segmentation ----------------------------------------------------------

TWO_BOXES = scenario([box_body(2, (4.0, -0.8, 1.0), (0.3, 0.3, 0.3), label="box"),
                      box_body(3, (4.0, 0.8, 1.0), (0.3, 0.3, 0.3), label="crate", color=(0.1, 0.8, 0.1))])


def _frame(d, t=0.0):
    spec = scenario_from_dict(d)
    return spec, render_frame(world_state_at(spec, t), spec)


def test_oracle_mask_two_boxes():
    spec, f = _frame(TWO_BOXES)
    out = segment_image_frame(f, "oracle-mask", camera=spec.camera, calib=CalibrationSet.from_scenario(spec),
                              labels=spec.labels())
    assert sorted(o.true_id for o in out) == [2, 3]
    assert {o.label for o in out} == {"box", "crate"}
    for o in out:
        assert np.all(o.aabb_world[0] <= o.aabb_world[1])
        assert abs(np.linalg.norm(o.embedding) - 1) <= 1e-6
        assert 0 <= o.confidence <= 1


def test_empty_view_no_observations():
    spec, f = _frame(scenario([]))
    calib = CalibrationSet.from_scenario(spec)
    assert segment_image_frame(f, "oracle-mask", camera=spec.camera, calib=calib) == []
    assert segment_image_frame(f, "depth-cluster", camera=spec.camera, calib=calib) == []


def test_depth_cluster_matches_mask():
    # thin panels: a grazing side face would step by more than the gap per pixel
    panels = scenario([box_body(2, (4.0, -0.8, 1.0), (0.05, 0.3, 0.3)),
                       box_body(3, (4.0, 0.8, 1.0), (0.05, 0.3, 0.3))])
    spec, f = _frame(panels)
    out = segment_image_frame(f, "depth-cluster", camera=spec.camera, calib=CalibrationSet.from_scenario(spec),
                              params=SegmentationParams(depth_gap=0.2))
    assert sorted(o.true_id for o in out) == [2, 3]
    for o in out:
        pix = o.mask_pixels
        assert np.all(f.instance_mask[pix[:, 0], pix[:, 1]] == o.true_id)
        assert o.label == "object"


def test_image_segmentation_errors():
    spec, f = _frame(TWO_BOXES)
    calib = CalibrationSet.from_scenario(spec)
    with pytest.raises(ValueError):
        segment_image_frame(f, "bogus", camera=spec.camera, calib=calib)
    f.depth = None
    with pytest.raises(ValueError, match="depth"):
        segment_image_frame(f, "oracle-mask", camera=spec.camera, calib=calib)


def test_query_gates_observations():
    spec, f = _frame(TWO_BOXES)
    out = segment_image_frame(f, "oracle-mask", query=encode_descriptor(label="crate"), camera=spec.camera,
                              calib=CalibrationSet.from_scenario(spec), labels=spec.labels())
    assert [o.true_id for o in out] == [3]


# -- point-cloud segmentation --------------------------------------------------


def _blob(rng, center, n=60, spread=0.1):
    return rng.normal(center, spread, (n, 3))


def test_two_blobs_two_observations(rng):
    p = SegmentationParams(cluster_radius=0.3, ground_z=-10)
    pts = np.concatenate([_blob(rng, (0, 0, 1)), _blob(rng, (3.0, 0, 1))])
    out = segment_point_cloud(pts, None, p)
    assert len(out) == 2
    assert sorted(len(o.point_indices) for o in out) == [60, 60]


def test_empty_cloud():
    assert segment_point_cloud(np.zeros((0, 3))) == []


def test_ground_points_removed(rng):
    pts = np.concatenate([_blob(rng, (2, 0, 0.0), spread=0.01), _blob(rng, (2, 0, 1.0))])
    out = segment_point_cloud(pts, None, SegmentationParams(ground_z=0.05, cluster_radius=0.3))
    assert len(out) == 1 and out[0].point_indices.min() >= 60


def test_accumulation_joins_split_blob():
    # current scan: two ends of a bar; previous scan: its middle
    xs = np.arange(0, 3.0, 0.1)
    bar = np.stack([xs, np.zeros_like(xs), np.ones_like(xs)], axis=1)
    middle = (xs > 1.0) & (xs < 2.0)
    p1 = SegmentationParams(cluster_radius=0.15, min_points=3, ground_z=0.0, accumulate=1)
    p2 = SegmentationParams(cluster_radius=0.15, min_points=3, ground_z=0.0, accumulate=2)
    assert len(segment_point_cloud(bar[~middle], None, p1)) == 2
    hist = ScanHistory(1)
    hist.push(bar[middle], np.zeros((middle.sum(), 3), np.uint8))
    out = segment_point_cloud(bar[~middle], None, p2, history=hist)
    assert len(out) == 1
    assert np.array_equal(out[0].point_indices, np.arange((~middle).sum()))


def test_ego_compensated_boxes_do_not_depend_on_robot_pose(rng):
    world = _blob(rng, (5, 1, 1))
    params = TrackingParams()
    boxes = []
    for T in (geo.pose(), geo.pose(geo.so3_exp([0, 0, 0.7]), [1.0, -2.0, 0.0])):
        local = geo.transform_points(geo.pose_inv(T), world)
        boxes.append(segment_point_cloud(local, T, SegmentationParams(ground_z=-10))[0])
    ts = TrackSet()
    track_objects(ts, [boxes[0]], None, 0.0, params)
    c = association_cost(ts.tracks[0], boxes[1], 0.1, params)
    assert c == pytest.approx(association_cost(ts.tracks[0], boxes[0], 0.1, params), abs=1e-9)


# -- fusion --------------------------------------------------------------------


def test_fuse_identical_boxes():
    a = obs((0, 0, 0), (1, 1, 1), true_id=4)
    b = obs((0, 0, 0), (1, 1, 1), label="object", source="pointcloud")
    out = fuse_observations([a], [b])
    assert len(out) == 1 and out[0].source == "fused" and out[0].label == "box"
    assert abs(np.linalg.norm(out[0].embedding) - 1) <= 1e-6


def test_fuse_disjoint_boxes():
    a = obs((0, 0, 0), (1, 1, 1))
    b = obs((5, 5, 5), (6, 6, 6), source="pointcloud")
    out = fuse_observations([a], [b])
    assert [o.source for o in out] == ["image", "pointcloud"]


def test_fuse_threshold_inclusive():
    a = obs((0, 0, 0), (6.5, 1, 1))
    b = obs((3.5, 0, 0), (10, 1, 1), source="pointcloud")
    assert geo.aabb_iou(a.aabb_world, b.aabb_world) == 0.3
    assert len(fuse_observations([a], [b], iou_threshold=0.3)) == 1
    assert len(fuse_observations([a], [b], iou_threshold=0.3 + 1e-12)) == 2


box_st = st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))


@settings(max_examples=60, deadline=None)
@given(img=st.lists(box_st, max_size=6), pcl=st.lists(box_st, max_size=6))
def test_fusion_partitions_inputs(img, pcl):
    A = [obs((x, y, 0), (x + s, y + s, s), mask_pixels=np.array([[i, 0]])) for i, (x, y, s) in enumerate(img)]
    B = [obs((x, y, 0), (x + s, y + s, s), source="pointcloud", point_indices=np.array([j]))
         for j, (x, y, s) in enumerate(pcl)]
    out = fuse_observations(A, B)
    assert len(out) <= len(A) + len(B)
    seen_a = [int(o.mask_pixels[0, 0]) for o in out if o.mask_pixels is not None]
    seen_b = [int(o.point_indices[0]) for o in out if o.point_indices is not None]
    assert sorted(seen_a) == list(range(len(A)))
    assert sorted(seen_b) == list(range(len(B)))
    assert all(abs(np.linalg.norm(o.embedding) - 1) <= 1e-6 for o in out)


# -- assignment ------------------------------------------------------------------


def _brute(c):
    n_r, n_c = c.shape
    best = None
    if n_r <= n_c:
        for cols in itertools.permutations(range(n_c), n_r):
            v = sum(c[i, j] for i, j in enumerate(cols))
            best = v if best is None or v < best else best
    else:
        for rows in itertools.permutations(range(n_r), n_c):
            v = sum(c[i, j] for j, i in enumerate(rows))
            best = v if best is None or v < best else best
    return best


def test_assignment_examples():
    assert solve_assignment([[0.0]]) == [(0, 0)]
    c = np.array([[1.0, 2.0], [3.0, 1.0]])
    pairs = solve_assignment(c)
    assert pairs == [(0, 0), (1, 1)] and assignment_cost(c, pairs) == 2.0
    assert solve_assignment([[5.0, 1.0]]) == [(0, 1)]
    assert solve_assignment(np.zeros((0, 3))) == []


def test_assignment_ties_lexicographic():
    assert solve_assignment(np.ones((3, 3))) == [(0, 0), (1, 1), (2, 2)]
    assert solve_assignment(np.ones((2, 3))) == [(0, 0), (1, 1)]


def test_assignment_forbidden_and_infeasible():
    c = np.array([[FORBIDDEN, 1.0], [2.0, FORBIDDEN]])
    assert solve_assignment(c) == [(0, 1), (1, 0)]
    with pytest.raises(InfeasibleAssignment):
        solve_assignment(np.array([[FORBIDDEN, FORBIDDEN], [1.0, 2.0]]))
    assert solve_assignment(np.array([[FORBIDDEN, FORBIDDEN, FORBIDDEN], [1.0, 2.0, 3.0]])) == [(1, 0)]
    with pytest.raises(ValueError):
        solve_assignment(np.array([[np.nan]]))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_assignment_optimal_vs_brute_force(n_r, n_c, data):
    vals = data.draw(st.lists(st.integers(0, 9), min_size=n_r * n_c, max_size=n_r * n_c))
    c = np.array(vals, dtype=float).reshape(n_r, n_c)
    pairs = solve_assignment(c)
    assert len(pairs) == min(n_r, n_c)
    assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
    assert assignment_cost(c, pairs) == _brute(c)


# -- tracking ------------------------------------------------------------------


def test_new_tracks_spawn_with_fresh_ids():
    ts = track_objects(TrackSet(), [obs((0, 0, 0), (1, 1, 1)), obs((5, 0, 0), (6, 1, 1))], None, 0.0)
    assert sorted(ts.tracks) == [0, 1]
    assert all(tr.state == TENTATIVE for tr in ts.tracks.values())


def test_static_scene_keeps_ids_and_confirms():
    ts = TrackSet()
    for k in range(10):
        track_objects(ts, [obs((0, 0, 0), (1, 1, 1), true_id=1), obs((5, 0, 0), (6, 1, 1), true_id=2)],
                      None, 0.1 * k)
        assert sorted(ts.matched) == [0, 1]
    assert sorted(ts.tracks) == [0, 1]
    assert {tr.true_id for tr in ts.tracks.values()} == {1, 2}
    assert all(tr.state == CONFIRMED and tr.hits == 10 for tr in ts.tracks.values())
    times = [t for t, _ in ts.tracks[0].tracklet]
    assert all(b > a for a, b in zip(times, times[1:]))


def test_track_lost_after_leaving_view():
    ts = TrackSet()
    for k in range(3):
        track_objects(ts, [obs((0, 0, 0), (1, 1, 1))], None, float(k))
    for k in range(3, 9):
        track_objects(ts, [], None, float(k))
    assert ts.tracks[0].state == LOST
    track_objects(ts, [obs((0, 0, 0), (1, 1, 1))], None, 9.0)
    assert sorted(ts.tracks) == [0, 1]  # a new id, never the lost one


def test_fully_gated_frame_spawns_instead_of_failing():
    ts = TrackSet()
    p = TrackingParams(gate=0.0)  # every pair with any cost is forbidden
    track_objects(ts, [obs((0, 0, 0), (1, 1, 1)), obs((5, 0, 0), (6, 1, 1))], None, 0.0, p)
    track_objects(ts, [obs((0.2, 0, 0), (1.2, 1, 1)), obs((5.2, 0, 0), (6.2, 1, 1))], None, 0.1, p)
    assert sorted(ts.tracks) == [0, 1, 2, 3]
    assert sorted(ts.matched) == [2, 3]
    assert ts.tracks[0].misses == 1


def test_tracking_rejects_time_regression():
    ts = track_objects(TrackSet(), [], None, 1.0)
    with pytest.raises(ValueError):
        track_objects(ts, [], None, 1.0)


def test_moving_object_followed_by_velocity_prediction():
    ts = TrackSet()
    for k in range(12):
        x = 0.25 * k
        track_objects(ts, [obs((x, 0, 0), (x + 0.4, 0.4, 0.4), emb_label="ball")], None, 0.1 * k)
    assert list(ts.tracks) == [0]


def test_cost_matrix_matches_pairwise_cost(rng):
    ts = TrackSet()
    first = [obs(c, c + rng.uniform(0.2, 1.5, 3), emb_label=l)
             for c, l in zip(rng.uniform(-3, 3, (5, 3)), ("a", "b", "c", "d", "e"))]
    track_objects(ts, first, None, 0.0)
    track_objects(ts, [obs(o.aabb_world[0] + 0.1, o.aabb_world[1] + 0.1, emb_label=o.label) for o in first],
                  None, 0.1)
    new = [obs(c, c + rng.uniform(0.2, 1.5, 3), emb_label=l) for c, l in zip(rng.uniform(-3, 3, (7, 3)), "abcdefg")]
    p = TrackingParams()
    tracks = ts.active()
    c = cost_matrix(tracks, new, 0.3, p)
    for i, tr in enumerate(tracks):
        for j, ob in enumerate(new):
            ref = association_cost(tr, ob, 0.3, p)
            if ref > p.gate:
                assert c[i, j] == FORBIDDEN
            else:
                assert c[i, j] == pytest.approx(ref, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(box_st, max_size=4), min_size=1, max_size=12))
def test_track_ids_unique_and_confirmed_hits(frames):
    ts = TrackSet()
    ever = set()
    for k, boxes in enumerate(frames):
        n_before = ts.next_id
        track_objects(ts, [obs((x, y, 0), (x + s, y + s, s)) for x, y, s in boxes], None, 0.1 * k)
        new = set(range(n_before, ts.next_id))
        assert not (new & ever)
        ever |= new
        for tr in ts.tracks.values():
            assert tr.state != CONFIRMED or tr.hits >= 3
    assert sorted(ts.tracks) == list(range(ts.next_id))
