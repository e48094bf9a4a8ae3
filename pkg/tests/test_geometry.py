import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from mmmap import geometry as geo

vec3 = st.tuples(*[st.floats(-10, 10)] * 3)
rotvec = st.tuples(*[st.floats(-3, 3)] * 3)


@settings(max_examples=60, deadline=None)
@given(w=rotvec, t=vec3)
def test_pose_inverse(w, t):
    T = geo.pose(geo.so3_exp(np.array(w)), np.array(t))
    assert np.allclose(geo.pose_inv(T) @ T, np.eye(4), atol=1e-9)
    assert geo.is_valid_pose(T)


@settings(max_examples=60, deadline=None)
@given(w=rotvec)
def test_quaternion_roundtrip(w):
    R = geo.so3_exp(np.array(w))
    q = geo.rot_to_quat(R)
    assert abs(np.linalg.norm(q) - 1) <= 1e-12
    assert np.allclose(geo.quat_to_rot(q), R, atol=1e-12)


def test_quaternion_convention_is_wxyz():
    q = geo.quat_from_rpy(0.0, 0.0, np.pi / 2)
    assert q == pytest.approx([np.sqrt(0.5), 0, 0, np.sqrt(0.5)])
    assert geo.yaw_of(geo.quat_to_rot(q)) == pytest.approx(np.pi / 2)


@settings(max_examples=40, deadline=None)
@given(a=rotvec, b=rotvec)
def test_quat_mul_matches_rotation_product(a, b):
    qa, qb = geo.quat_from_rotvec(np.array(a)), geo.quat_from_rotvec(np.array(b))
    want = Rotation.from_rotvec(a) * Rotation.from_rotvec(b)
    assert np.allclose(geo.quat_to_rot(geo.quat_mul(qa, qb)), want.as_matrix(), atol=1e-10)


def test_slerp_endpoints_and_midpoint():
    q0 = geo.quat_from_rpy(0, 0, 0)
    q1 = geo.quat_from_rpy(0, 0, 1.0)
    assert np.allclose(geo.slerp(q0, q1, 0.0), q0)
    assert np.allclose(geo.slerp(q0, q1, 1.0), q1)
    assert geo.yaw_of(geo.quat_to_rot(geo.slerp(q0, q1, 0.5))) == pytest.approx(0.5)


def test_pose_json_forms():
    T = geo.pose_from_json({"t": [1, 2, 3], "yaw": 0.3})
    assert np.allclose(geo.pose_from_json(geo.pose_to_json(T)), T, atol=1e-15)
    with pytest.raises(ValueError):
        geo.pose_from_json({"t": [1, 2]})
    with pytest.raises(ValueError):
        geo.pose_from_json({"q": [0, 0, 0, 0]})
    with pytest.raises(ValueError):
        geo.pose_from_json({"x": 1})


def test_aabb_helpers():
    a = np.array([[0, 0, 0], [2, 2, 2]], float)
    b = np.array([[1, 1, 1], [3, 3, 3]], float)
    assert geo.aabb_intersection_volume(a, b) == 1.0
    assert geo.aabb_iou(a, b) == pytest.approx(1 / 15)
    assert geo.aabb_iou(a, a + 5) == 0.0
    assert geo.aabb_contains(a, np.array([[0.5] * 3, [1.5] * 3]))
    assert not geo.aabb_contains(a, b)
    assert geo.aabb_overlap_2d(a, b) == 1.0
