"""Command generation: goal sampling, interpolation, twists, gait, frames."""

import math

import numpy as np
import pytest

from locomanip import lie
from locomanip.commands import (
    CommandVector,
    FrameCurriculum,
    GaitState,
    GoalSamplingError,
    TrajectorySpec,
    Twist,
    advance_gait,
    base_frame_from_control,
    control_frame_from_base,
    express_in_frame,
    foot_heights,
    interpolate,
    resample_base_command,
    sample_goal_pose,
    sample_goals_batch,
    twist_command,
)
from locomanip.env import EnvConfig, ToyVecEnv

RNG = np.random.default_rng


def random_pose(rng):
    return lie.Pose(rng.standard_normal(3), lie.quat_normalize(rng.standard_normal(4)))


CUBOID = (np.array([-0.3, -0.2, -0.15]), np.array([0.3, 0.2, 0.15]))
SHOULDER = np.array([0.27, 0.0, 0.17])


def test_goal_positions_in_sphere_outside_cuboid():
    rng = RNG(0)
    for _ in range(500):
        pose = sample_goal_pose(rng, SHOULDER, CUBOID)
        assert np.linalg.norm(pose.position - SHOULDER) <= 1.0 + 1e-12
        inside = np.all(pose.position >= CUBOID[0]) and np.all(pose.position <= CUBOID[1])
        assert not inside


def test_goal_orientation_zero_tilt_x_axis_is_gravity():
    rng = RNG(1)
    pose = sample_goal_pose(rng, SHOULDER, CUBOID, tilt_bound=0.0)
    x_axis = lie.quat_to_matrix(pose.orientation)[:, 0]
    np.testing.assert_allclose(x_axis, [0.0, 0.0, -1.0], atol=1e-12)


def test_goal_rejection_rate_matches_volume():
    # Monte-Carlo check: rejection frequency ~ vol(cuboid n sphere)/vol(sphere)
    rng = RNG(2)
    n = 100_000
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = rng.uniform(size=n) ** (1.0 / 3.0)
    pts = SHOULDER + direction * r[:, None]
    inside = np.all(pts >= CUBOID[0], axis=1) & np.all(pts <= CUBOID[1], axis=1)
    expected_rate = inside.mean()

    hits = 0
    draws = 2000
    for _ in range(draws):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p = SHOULDER + d * rng.uniform() ** (1.0 / 3.0)
        if np.all(p >= CUBOID[0]) and np.all(p <= CUBOID[1]):
            hits += 1
    # both are MC estimates of the same overlap volume fraction
    assert abs(hits / draws - expected_rate) < 0.03


def test_goal_sampler_degenerate_cuboid_raises():
    rng = RNG(3)
    huge = (np.array([-10.0, -10.0, -10.0]), np.array([10.0, 10.0, 10.0]))
    with pytest.raises(GoalSamplingError):
        sample_goal_pose(rng, SHOULDER, huge, max_draws=50)


def test_goal_batch_same_distribution():
    rng = RNG(4)
    pos, quat = sample_goals_batch(rng, 400, SHOULDER, CUBOID, 1.0, math.pi / 4,
                                   np.zeros(3))
    assert np.all(np.linalg.norm(pos - SHOULDER, axis=1) <= 1.0 + 1e-12)
    inside = np.all(pos >= CUBOID[0], axis=1) & np.all(pos <= CUBOID[1], axis=1)
    assert not inside.any()
    norms = np.linalg.norm(quat, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_interpolate_endpoints_and_midpoint():
    rng = RNG(5)
    spec = TrajectorySpec(random_pose(rng), random_pose(rng), duration=2.0)
    start = interpolate(spec, 0.0)
    np.testing.assert_allclose(start.position, spec.start.position)
    assert lie.rotation_angle(start.orientation, spec.start.orientation) < 1e-12
    end = interpolate(spec, 2.0)
    np.testing.assert_allclose(end.position, spec.goal.position, atol=1e-12)
    assert lie.rotation_angle(end.orientation, spec.goal.orientation) < 1e-9
    held = interpolate(spec, 5.0)
    np.testing.assert_allclose(held.position, spec.goal.position, atol=1e-12)
    mid = interpolate(spec, 1.0)
    np.testing.assert_allclose(
        mid.position, 0.5 * (spec.start.position + spec.goal.position), atol=1e-12)


def test_trajectory_spec_validation():
    rng = RNG(6)
    with pytest.raises(ValueError):
        TrajectorySpec(random_pose(rng), random_pose(rng), duration=0.0)
    with pytest.raises(ValueError):
        TrajectorySpec(random_pose(rng), random_pose(rng), duration=1.0, mode="warp")


def test_twist_command_zero_at_target():
    rng = RNG(7)
    pose = random_pose(rng)
    tw = twist_command(pose, pose.copy(), 0.02)
    np.testing.assert_allclose(tw.linear, 0.0, atol=1e-12)
    np.testing.assert_allclose(tw.angular, 0.0, atol=1e-12)


def test_twist_command_linear_arithmetic():
    rng = RNG(8)
    current = random_pose(rng)
    waypoint = lie.Pose(current.position + [0.05, 0.0, 0.0], current.orientation)
    tw = twist_command(waypoint, current, 0.02)
    np.testing.assert_allclose(tw.linear, [2.5, 0.0, 0.0], atol=1e-12)


def test_twist_command_angular_hand_value():
    # 90 degrees about z over half a second: angular speed pi about z
    current = lie.Pose([0, 0, 0], lie.quat_identity())
    waypoint = lie.Pose([0, 0, 0], lie.quat_from_rpy(0.0, 0.0, math.pi / 2))
    tw = twist_command(waypoint, current, 0.5)
    np.testing.assert_allclose(tw.angular, [0.0, 0.0, math.pi], atol=1e-12)


def test_twist_command_dt_domain():
    pose = lie.Pose()
    with pytest.raises(ValueError):
        twist_command(pose, pose, 0.0)


def test_twist_closed_loop_reaches_waypoints():
    """An ideal twist integrator lands exactly on each interpolated waypoint."""
    rng = RNG(9)
    dt = 0.02
    spec = TrajectorySpec(random_pose(rng), random_pose(rng), duration=1.5)
    ee = spec.start.copy()
    t = 0.0
    while t < spec.duration:
        wp = interpolate(spec, t + dt)
        tw = twist_command(wp, ee, dt)
        ee = lie.Pose(ee.position + tw.linear * dt,
                      lie.boxplus(ee.orientation, tw.angular * dt))
        np.testing.assert_allclose(ee.position, wp.position, atol=1e-9)
        assert lie.rotation_angle(ee.orientation, wp.orientation) < 1e-9
        t += dt


def test_foot_heights_clamped_sinusoid():
    gait = GaitState(phase=0.0, offsets=(0.25, 0.0, 0.75, 0.5), h_max=0.1)
    h = foot_heights(gait)
    assert abs(h[0] - 0.1) < 1e-15  # sin(pi/2)
    assert h[1] == 0.0  # sin(0)
    assert h[2] == 0.0  # sin(3pi/2) clamped
    assert h[3] < 1e-15  # sin(pi), zero up to fp noise


def test_foot_heights_range_and_trot_airborne_count():
    gait = GaitState(offsets=(0.0, 0.5, 0.5, 0.0), h_max=0.08)
    rng = RNG(10)
    for _ in range(200):
        phase = float(rng.uniform())
        if min(phase % 0.5, 0.5 - phase % 0.5) < 1e-6:
            continue  # transition instants have zero airborne feet
        h = foot_heights(GaitState(phase=phase, offsets=(0.0, 0.5, 0.5, 0.0), h_max=0.08))
        assert np.all(h >= 0.0) and np.all(h <= 0.08)
        assert int(np.sum(h > 1e-12)) == 2


def test_advance_gait_wraps():
    gait = GaitState(phase=0.0, frequency=1.0)
    g1 = advance_gait(gait, 0.02)
    assert abs(g1.phase - 0.02) < 1e-15
    g2 = advance_gait(gait, 1.0)
    assert abs(g2.phase - 0.0) < 1e-12
    g3 = advance_gait(GaitState(phase=0.99, frequency=1.0), 0.02)
    assert abs(g3.phase - 0.01) < 1e-12
    assert g3.offsets == gait.offsets


def test_resample_base_command_distribution():
    rng = RNG(11)
    samples = np.array([np.r_[v, w] for v, w in
                        (resample_base_command(rng) for _ in range(100_000))])
    assert np.all(np.abs(samples) <= 0.25)
    assert np.all(np.abs(samples.mean(axis=0)) < 0.01)
    # uniform on [-0.25, 0.25]: variance 0.5^2 / 12
    expected_var = 0.5 ** 2 / 12.0
    np.testing.assert_allclose(samples.var(axis=0), expected_var, rtol=0.05)


def test_command_vector_flat_length():
    cmd = CommandVector()
    assert cmd.flat().shape == (20,)
    rng = RNG(12)
    cmd2 = CommandVector(
        base_lin=rng.standard_normal(2), base_ang_z=0.3,
        ee_twist=Twist(rng.standard_normal(3), rng.standard_normal(3)),
        goal_pose=random_pose(rng), foot_heights=rng.uniform(0, 0.1, 4))
    assert cmd2.flat().shape == (20,)


def test_frame_curriculum_schedule():
    cur = FrameCurriculum(switch_iteration=100)
    assert cur.frame_at(0) == "base"
    assert cur.frame_at(99) == "base"
    assert cur.frame_at(100) == "control"


class _State:
    """Minimal robot-state stand-in for frame transforms."""

    def __init__(self, roll=0.0, pitch=0.0, yaw=0.0, z=0.35):
        self.base_rpy = np.array([roll, pitch, yaw])
        self.base_pos = np.array([0.0, 0.0, z])


def _cmd(rng):
    return CommandVector(
        base_lin=rng.standard_normal(2), base_ang_z=0.1,
        ee_twist=Twist(rng.standard_normal(3), rng.standard_normal(3)),
        goal_pose=random_pose(rng), foot_heights=rng.uniform(0, 0.1, 4))


def test_express_in_frame_level_base_identity():
    rng = RNG(13)
    cmd = _cmd(rng)
    state = _State()
    out = express_in_frame(cmd, state, "control", z_nominal=0.35)
    np.testing.assert_allclose(out.flat(), cmd.flat(), atol=1e-12)


def test_express_in_frame_yaw_invariant():
    rng = RNG(14)
    cmd = _cmd(rng)
    out1 = express_in_frame(cmd, _State(yaw=0.0), "control", z_nominal=0.35)
    out2 = express_in_frame(cmd, _State(yaw=2.1), "control", z_nominal=0.35)
    np.testing.assert_allclose(out1.flat(), out2.flat(), atol=1e-12)


def test_express_in_frame_pitch_rotation():
    rng = RNG(15)
    cmd = _cmd(rng)
    pitch = math.radians(30.0)
    out = express_in_frame(cmd, _State(pitch=pitch), "control", z_nominal=0.35)
    rot = lie.quat_to_matrix(lie.quat_from_rpy(0.0, pitch, 0.0))
    np.testing.assert_allclose(out.ee_twist.linear, rot @ cmd.ee_twist.linear,
                               atol=1e-12)
    np.testing.assert_allclose(out.ee_twist.angular, rot @ cmd.ee_twist.angular,
                               atol=1e-12)
    # base command and foot heights are frame-independent
    np.testing.assert_array_equal(out.base_lin, cmd.base_lin)
    np.testing.assert_array_equal(out.foot_heights, cmd.foot_heights)


def test_frame_transforms_roundtrip():
    rng = RNG(16)
    cmd = _cmd(rng)
    state = _State(roll=0.2, pitch=-0.3, yaw=1.0, z=0.31)
    there = control_frame_from_base(state, cmd, 0.35)
    back = base_frame_from_control(state, there, 0.35)
    np.testing.assert_allclose(back.flat(), cmd.flat(), atol=1e-12)
