import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxpush.pushworld import BoxPose, CavityModel, planar_distance, resolve_contact, tip_in_box_frame
from oracles import project_contact_incremental

CAV = CavityModel(half_width=0.04, rot_coupling=0.5, insert_height=0.05)
INSIDE_Z = 0.02

coords = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)
yaws = st.floats(min_value=-np.pi, max_value=np.pi, allow_nan=False)


def test_tip_in_box_frame_examples():
    np.testing.assert_allclose(
        tip_in_box_frame(BoxPose(0.0, 0.0, 0.0), [0.02, 0.0]), [0.02, 0.0], atol=1e-15)
    np.testing.assert_allclose(
        tip_in_box_frame(BoxPose(1.0, 0.0, 0.0), [1.02, 0.0]), [0.02, 0.0], atol=1e-15)
    np.testing.assert_allclose(
        tip_in_box_frame(BoxPose(0.0, 0.0, np.pi / 2), [0.0, 0.03]), [0.03, 0.0], atol=1e-15)


def test_planar_distance_examples():
    assert planar_distance(BoxPose(0, 0, 0), BoxPose(0, 0, 1.0)) == 0.0
    assert planar_distance(BoxPose(0, 0, 0), BoxPose(0.3, 0.4, 0)) == pytest.approx(0.5)
    assert planar_distance(BoxPose(0.3, -0.45, 0), BoxPose(0.6, 0.45, 0)) == pytest.approx(
        np.sqrt(0.09 + 0.81))


def test_no_contact_keeps_pose_bitwise():
    box = BoxPose(0.123456789, -0.3141592, 0.777)
    out = resolve_contact(box, [0.125, -0.31], INSIDE_Z, CAV)
    assert out.x == box.x and out.y == box.y and out.yaw == box.yaw
    # above insert height: even a "penetrating" tip does nothing
    out2 = resolve_contact(box, [0.5, 0.5], 0.06, CAV)
    assert out2.x == box.x and out2.y == box.y and out2.yaw == box.yaw


def test_centered_push_translates_without_rotation():
    out = resolve_contact(BoxPose(0.0, 0.0, 0.0), [0.05, 0.0], INSIDE_Z, CAV)
    assert float(out.x) == pytest.approx(0.01, abs=1e-12)
    assert float(out.y) == pytest.approx(0.0, abs=1e-12)
    assert float(out.yaw) == 0.0


def test_offset_push_matches_projection_oracle():
    box = BoxPose(0.0, 0.0, 0.0)
    tip = [0.05, 0.02]
    out = resolve_contact(box, tip, INSIDE_Z, CAV)
    ox, oy, oyaw = project_contact_incremental((0.0, 0.0, 0.0), tip, INSIDE_Z, CAV)
    assert float(out.x) == pytest.approx(ox, abs=1e-4)
    assert float(out.y) == pytest.approx(oy, abs=1e-4)
    assert float(out.yaw) == pytest.approx(oyaw, abs=1e-4)
    # sign check: pushing the +x wall above center torques the box clockwise
    assert float(out.yaw) < 0.0


@given(coords, coords, yaws, coords, coords)
@settings(max_examples=15, deadline=None)
def test_random_contacts_match_projection_oracle(bx, by, yaw, ox, oy):
    cav = CavityModel(half_width=0.04, rot_coupling=1.5, insert_height=0.05)
    tip = np.array([bx + 0.07 * ox, by + 0.07 * oy])
    out = resolve_contact(BoxPose(bx, by, yaw), tip, INSIDE_Z, cav)
    ex, ey, eyaw = project_contact_incremental((bx, by, yaw), tip, INSIDE_Z, cav)
    assert float(out.x) == pytest.approx(ex, abs=1e-4)
    assert float(out.y) == pytest.approx(ey, abs=1e-4)
    from boxpush.mathcore import yaw_error
    assert float(yaw_error(out.yaw, eyaw)) < 1e-4


@given(coords, coords, yaws, coords, coords)
@settings(max_examples=100, deadline=None)
def test_post_resolution_containment(bx, by, yaw, ox, oy):
    tip = np.array([bx + 0.2 * ox, by + 0.2 * oy])
    out = resolve_contact(BoxPose(bx, by, yaw), tip, INSIDE_Z, CAV)
    p = tip_in_box_frame(out, tip)
    assert np.all(np.abs(p) <= CAV.half_width + 1e-9)


@given(coords, coords, yaws, coords, coords, yaws, coords, coords)
@settings(max_examples=60, deadline=None)
def test_frame_equivariance(bx, by, yaw, ox, oy, theta, tx, ty):
    tip = np.array([bx + 0.12 * ox, by + 0.12 * oy])
    base = resolve_contact(BoxPose(bx, by, yaw), tip, INSIDE_Z, CAV)
    # rigidly transform box and tip by (theta, t), resolve, map back
    c, s = np.cos(theta), np.sin(theta)
    tip2 = np.array([c * tip[0] - s * tip[1] + tx, s * tip[0] + c * tip[1] + ty])
    box2 = BoxPose(c * bx - s * by + tx, s * bx + c * by + ty, yaw + theta)
    out2 = resolve_contact(box2, tip2, INSIDE_Z, CAV)
    np.testing.assert_allclose(
        [float(out2.x), float(out2.y)],
        [c * float(base.x) - s * float(base.y) + tx, s * float(base.x) + c * float(base.y) + ty],
        atol=1e-9)
    from boxpush.mathcore import yaw_error
    assert float(yaw_error(out2.yaw, base.yaw + theta)) < 1e-9


@given(coords, coords, yaws, coords, coords)
@settings(max_examples=60, deadline=None)
def test_zero_coupling_never_rotates(bx, by, yaw, ox, oy):
    cav = CavityModel(half_width=0.04, rot_coupling=0.0, insert_height=0.05)
    tip = np.array([bx + 0.2 * ox, by + 0.2 * oy])
    out = resolve_contact(BoxPose(bx, by, yaw), tip, INSIDE_Z, cav)
    from boxpush.mathcore import wrap_to_pi
    assert float(out.yaw) == float(yaw) or float(out.yaw) == pytest.approx(
        float(wrap_to_pi(yaw)), abs=0.0)


def test_cavity_validation():
    with pytest.raises(ValueError):
        CavityModel(half_width=0.06)
    with pytest.raises(ValueError):
        CavityModel(rot_coupling=-1.0)


def test_batched_contact_matches_scalar():
    rng = np.random.default_rng(8)
    n = 64
    bx, by = rng.uniform(-0.5, 0.5, (2, n))
    yaw = rng.uniform(-np.pi, np.pi, n)
    tip = np.stack([bx + rng.uniform(-0.1, 0.1, n), by + rng.uniform(-0.1, 0.1, n)], axis=-1)
    out = resolve_contact(BoxPose(bx, by, yaw), tip, np.full(n, INSIDE_Z), CAV)
    for i in range(n):
        single = resolve_contact(BoxPose(bx[i], by[i], yaw[i]), tip[i], INSIDE_Z, CAV)
        assert float(out.x[i]) == float(single.x)
        assert float(out.y[i]) == float(single.y)
        assert float(out.yaw[i]) == float(single.yaw)
