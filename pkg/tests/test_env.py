"""Toy simulator: action rule, dynamics fixed points, contacts, observations,
episode randomization and forward kinematics."""

import dataclasses
import math

import numpy as np
import pytest

from locomanip.arm import ArmModel
from locomanip.commands import Twist
from locomanip.env import (
    ActionConfig,
    DisturbanceConfig,
    EnvConfig,
    PhysicsConfig,
    ToyVecEnv,
    apply_action,
    assemble_observations,
    ee_forward_kinematics,
    noise_template,
    obs_dim,
    obs_slices,
    observe,
    privileged_mask,
    randomize_episode,
)
from locomanip.lie import quat_identity, rotation_angle

RNG = np.random.default_rng


def quiet_disturbances():
    return DisturbanceConfig(
        friction_static=(1.0, 1.0), friction_dynamic=(1.0, 1.0),
        torso_mass=(0.0, 0.0), ee_mass=(0.0, 0.0),
        torso_force=(0.0, 0.0), torso_torque=(0.0, 0.0),
        ee_force=(0.0, 0.0), ee_torque=(0.0, 0.0),
        push_lin_vel=(0.0, 0.0), push_ang_vel=(0.0, 0.0))


def make_env(n=1, seed=0, **physics_overrides):
    physics = PhysicsConfig(**physics_overrides)
    cfg = EnvConfig(num_envs=n, episode_s=1000.0, physics=physics,
                    disturbances=quiet_disturbances())
    return ToyVecEnv(cfg, RNG(seed)), cfg


def settle(env):
    """Zero the pose and joints into the resting fixed point."""
    env.joints[:] = 0.0
    env.joint_targets[:] = 0.0
    env.base_vel_xy[:] = 0.0
    env.base_rpy[:] = 0.0
    env.base_rpy_rate[:] = 0.0
    env.base_pos[:, :2] = 0.0
    env.base_pos[:, 2] = env.cfg.physics.z_nominal
    env.leg_heights[:] = 0.0
    env.contacts[:] = 1.0
    env._refresh_ee_pose(np.arange(env.n))


def step_zero(env, steps=1, base_cmd=None, foot_cmd=None, targets=None):
    n = env.n
    base_cmd = np.zeros((n, 3)) if base_cmd is None else base_cmd
    foot_cmd = np.zeros((n, 4)) if foot_cmd is None else foot_cmd
    for _ in range(steps):
        t = env.joints.copy() if targets is None else targets
        env.step(t, base_cmd, foot_cmd, np.zeros(n))


class TestApplyAction:
    def test_zero_action_keeps_targets(self):
        cfg = ActionConfig()
        joints = RNG(0).standard_normal(10)
        np.testing.assert_array_equal(apply_action(joints, np.zeros(10), cfg), joints)

    def test_clamp_bounds(self):
        cfg = ActionConfig(sigma_a=0.25)
        joints = np.zeros(10)
        a = np.zeros(10)
        a[3] = 3.0 * cfg.sigma_a  # a / sigma = 3 -> clamped to +1
        targets = apply_action(joints, a, cfg)
        assert targets[3] == 1.0
        a[3] = -0.5 * cfg.sigma_a  # within the clamp
        targets = apply_action(joints, a, cfg)
        assert targets[3] == -0.5

    def test_limit_saturation_and_nan(self):
        cfg = ActionConfig()
        lo, hi = np.full(10, -0.3), np.full(10, 0.3)
        targets = apply_action(np.zeros(10), np.full(10, 10.0), cfg, lo, hi)
        np.testing.assert_array_equal(targets, hi)
        with pytest.raises(FloatingPointError):
            apply_action(np.zeros(10), np.full(10, np.nan), cfg)

    def test_nan_masks_into_termination(self):
        env, _ = make_env()
        actions = np.zeros((1, 10))
        actions[0, 2] = np.nan
        targets, nan_mask = env.apply_actions(actions)
        assert nan_mask[0] == 1.0
        env.step(targets, np.zeros((1, 3)), np.zeros((1, 4)), nan_mask)
        assert env.terminated[0] == 1.0


class TestDynamics:
    def test_settled_fixed_point(self):
        env, _ = make_env()
        settle(env)
        before = (env.base_pos.copy(), env.base_rpy.copy(), env.base_vel_xy.copy(),
                  env.joints.copy(), env.leg_heights.copy())
        step_zero(env, steps=10)
        after = (env.base_pos, env.base_rpy, env.base_vel_xy, env.joints,
                 env.leg_heights)
        for b, a in zip(before, after):
            np.testing.assert_allclose(a, b, atol=1e-12)
        assert env.terminated[0] == 0.0

    def test_base_velocity_first_order_convergence(self):
        # with propulsion quality pinned at ~1, the base is a first-order lag:
        # after 5 time constants the error is under 1%
        env, cfg = make_env(gait_sigma_sq=1e9)
        settle(env)
        cmd = np.array([[0.2, -0.1, 0.15]])
        tau = cfg.physics.tau_base
        steps = int(round(5.0 * tau / cfg.action.control_dt))
        step_zero(env, steps=steps, base_cmd=cmd)
        assert abs(env.base_vel_xy[0, 0] - 0.2) < 0.01 * 0.25
        assert abs(env.base_vel_xy[0, 1] + 0.1) < 0.01 * 0.25
        assert abs(env.base_rpy_rate[0, 2] - 0.15) < 0.01 * 0.25

    def test_leg_tracks_commanded_sinusoid_within_rate_limit(self):
        env, cfg = make_env()
        settle(env)
        dt = cfg.action.control_dt
        freq, h_max = 1.5, 0.06
        # drive leg 0 directly at its target each step; the reference follows
        # a rate-limited copy of the commanded profile
        expected = 0.0
        rate = cfg.action.leg_rate_limit * dt
        for k in range(400):
            t = (k + 1) * dt
            h_cmd = h_max * max(0.0, math.sin(2.0 * math.pi * freq * t))
            targets = env.joints.copy()
            targets[0, 0] = h_cmd
            env.step(targets, np.zeros((1, 3)), np.zeros((1, 4)), np.zeros(1))
            expected += np.clip(h_cmd - expected, -rate, rate)
            assert abs(env.leg_heights[0, 0] - expected) < 1e-12

    def test_contact_iff_below_eps_and_force_consistency(self):
        env, cfg = make_env(n=4)
        settle(env)
        heights = np.array([[0.0, 0.1, 0.002, 0.05]])
        env.pose_legs(np.array([0]), heights[:1])
        step_zero(env, steps=1, targets=env.joints.copy())
        eps = cfg.physics.contact_eps
        for f in range(4):
            in_contact = env.leg_heights[0, f] <= eps
            assert (env.contacts[0, f] > 0.5) == in_contact
            if in_contact:
                assert env.forces[0, f] > 0.0
            else:
                assert env.forces[0, f] == 0.0

    def test_fall_terminates_within_one_step_of_threshold(self):
        env, cfg = make_env()
        settle(env)
        # lift three feet: height collapses at fall_speed until termination
        heights = np.array([[0.05, 0.06, 0.07, 0.0]])
        env.pose_legs(np.array([0]), heights)
        z_term = cfg.physics.terminate_z
        fall = cfg.physics.fall_speed
        dt = cfg.action.control_dt
        steps = 0
        while env.terminated[0] == 0.0 and steps < 200:
            z_prev = env.base_pos[0, 2]
            step_zero(env, steps=1, targets=env.joints.copy())
            steps += 1
        assert env.terminated[0] == 1.0
        # crossed the threshold on exactly the step it was flagged
        assert env.base_pos[0, 2] < z_term
        assert z_prev - env.base_pos[0, 2] == pytest.approx(fall * dt)

    def test_roll_pitch_termination(self):
        env, cfg = make_env()
        settle(env)
        env.base_rpy[0, 1] = cfg.physics.terminate_roll_pitch + 0.2
        env.base_rpy_rate[:] = 0.0
        step_zero(env, steps=1)
        assert env.terminated[0] == 1.0

    def test_stepping_legs_shake_the_torso(self):
        env, cfg = make_env()
        settle(env)
        dt = cfg.action.control_dt
        rolls = []
        for k in range(300):
            t = (k + 1) * dt
            phase = 1.5 * t
            offsets = np.array([0.0, 0.5, 0.25, 0.75])
            h = 0.08 * np.maximum(np.sin(2 * np.pi * (phase + offsets)), 0.0)
            targets = env.joints.copy()
            targets[0, :4] = h
            env.step(targets, np.zeros((1, 3)), h[None, :], np.zeros(1))
            rolls.append(env.base_rpy[0, 0])
        assert np.ptp(rolls) > 0.1  # stepping produces real attitude wobble
        assert env.terminated[0] == 0.0  # but a clean gait never falls

    def test_determinism_bit_exact(self):
        def run(seed):
            env, _ = make_env(n=4, seed=seed)
            rng = RNG(99)
            trace = []
            for _ in range(50):
                actions = rng.uniform(-0.3, 0.3, (4, 10))
                targets, nan_mask = env.apply_actions(actions)
                env.step(targets, np.zeros((4, 3)), np.zeros((4, 4)), nan_mask)
                trace.append(env.base_pos.copy())
            return np.array(trace), env.joints.copy()

        t1, j1 = run(7)
        t2, j2 = run(7)
        np.testing.assert_array_equal(t1, t2)
        np.testing.assert_array_equal(j1, j2)


class TestObservation:
    def test_dimensions_and_slices(self):
        cfg = EnvConfig()
        assert obs_dim(cfg) == 131
        s = obs_slices(cfg)
        assert s["privileged"].stop - s["privileged"].start == 32
        assert s["command"].stop == obs_dim(cfg)
        full = EnvConfig(joints_per_leg=3)
        assert obs_dim(full) == 4 * 18 + 9 + 2 * 18 + 32 + 18 + 20

    def test_vec_observation_dim_and_privileged_block(self):
        env, cfg = make_env(n=3)
        cmd = RNG(1).standard_normal((3, 20))
        obs = assemble_observations(env, cmd)
        assert obs.shape == (3, obs_dim(cfg))
        np.testing.assert_array_equal(obs[:, obs_slices(cfg)["command"]], cmd)

    def test_single_observe_teacher_student_agree_outside_privileged(self):
        env, cfg = make_env()
        state = env.state_at(0)
        cmd = RNG(2).standard_normal(20)
        history = np.tile(state.joints, (4, 1))
        teacher = observe(state, cmd, np.zeros(10), history, privileged=True)
        student = observe(state, cmd, np.zeros(10), history, privileged=False)
        np.testing.assert_array_equal(teacher.history, student.history)
        np.testing.assert_array_equal(teacher.proprio, student.proprio)
        np.testing.assert_array_equal(teacher.command, student.command)
        assert np.all(student.privileged == 0.0)
        assert teacher.flat().shape == (obs_dim(cfg),)

    def test_noise_within_bounds(self):
        env, cfg = make_env()
        state = env.state_at(0)
        cmd = np.zeros(20)
        history = np.tile(state.joints, (4, 1))
        clean = observe(state, cmd, np.zeros(10), history, privileged=False)
        scale = noise_template(cfg)
        s = obs_slices(cfg)
        rng = RNG(3)
        for _ in range(20):
            noisy = observe(state, cmd, np.zeros(10), history, privileged=False,
                            noise_rng=rng)
            delta = np.abs(noisy.flat() - clean.flat())
            assert np.all(delta <= scale + 1e-12)
            # joint velocity block actually carries the largest noise
            assert delta[s["command"]].max() == 0.0

    def test_push_alters_observed_not_commanded(self):
        env, _ = make_env()
        settle(env)
        env.push_start[0, 0] = 0.0
        env.push_end[0, 0] = 1e9
        env.push_vel[0, 0, :3] = [0.1, 0.0, 0.0]
        cmd = np.zeros((1, 20))
        obs = assemble_observations(env, cmd)
        s = obs_slices(env.cfg)
        measured_v = obs[0, s["lin_vel"]]
        assert abs(measured_v[0] - 0.1) < 1e-12  # sensed velocity is offset
        assert env.base_vel_xy[0, 0] == 0.0  # true state is not
        # the privileged block reports the active push (after contacts 4,
        # friction 4, air time 4, base wrench 6)
        priv = obs[0, s["privileged"]]
        assert priv[18] == pytest.approx(0.1)


class TestRandomization:
    def test_samples_within_ranges(self):
        cfg = DisturbanceConfig()
        rng = RNG(4)
        for _ in range(100):
            d = randomize_episode(rng, cfg, horizon_s=8.0)
            assert np.all(d.friction_static >= 0.5) and np.all(d.friction_static <= 1.2)
            assert -10.0 <= d.torso_mass <= 10.0
            assert 0.0 <= d.ee_mass <= 1.8
            assert np.all(np.abs(d.base_wrench[:3]) <= 50.0)
            assert np.all(np.abs(d.base_wrench[3:]) <= 20.0)
            assert np.all(np.abs(d.ee_wrench[:3]) <= 3.0)
            finite = np.isfinite(d.push_start)
            assert np.all(np.abs(d.push_vel[finite]) <= 0.2)

    def test_zero_width_ranges_deterministic(self):
        d1 = randomize_episode(RNG(5), quiet_disturbances())
        d2 = randomize_episode(RNG(6), quiet_disturbances())
        assert d1.torso_mass == d2.torso_mass == 0.0
        np.testing.assert_array_equal(d1.base_wrench, d2.base_wrench)
        np.testing.assert_array_equal(d1.friction_static, d2.friction_static)

    def test_push_schedule_within_horizon(self):
        rng = RNG(7)
        d = randomize_episode(rng, DisturbanceConfig(), horizon_s=8.0)
        finite = np.isfinite(d.push_start)
        assert np.all(d.push_start[finite] < 8.0)
        assert np.all(d.push_end[finite] > d.push_start[finite])
        assert np.all(np.isinf(d.push_start[~finite]))
        # pulse lookup composes the active windows
        if finite.any():
            t = float(d.push_start[finite][0])
            np.testing.assert_array_equal(d.push_velocity_at(t), d.push_vel[finite][0])


class TestForwardKinematics:
    def test_home_pose(self):
        pose = ee_forward_kinematics(np.zeros(6))
        np.testing.assert_allclose(pose.position, [0.75, 0.0, 0.12], atol=1e-12)
        assert rotation_angle(pose.orientation, quat_identity()) < 1e-12

    def test_joint_one_rotates_about_mount_z(self):
        # joint 1 axis is the mount z; its offset is purely vertical, so the
        # end-effector trajectory is a circle about the mount z axis
        home = ee_forward_kinematics(np.zeros(6)).position
        q = np.zeros(6)
        q[0] = math.pi / 2
        rotated = ee_forward_kinematics(q).position
        expected = np.array([-home[1], home[0], home[2]])
        np.testing.assert_allclose(rotated, expected, atol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        # boxminus differences live in the moving end-effector frame; rotate
        # them into the mount frame before comparing to the geometric rows
        from locomanip.lie import boxminus, quat_to_matrix

        arm = ArmModel()
        rng = RNG(8)
        h = 1e-6
        for _ in range(10):
            q = rng.uniform(-1.5, 1.5, 6)
            jac = arm.jacobian(q)
            rot = quat_to_matrix(arm.forward(q).orientation)
            fd_pos = np.zeros((3, 6))
            fd_rot = np.zeros((3, 6))
            for j in range(6):
                qp, qm = q.copy(), q.copy()
                qp[j] += h
                qm[j] -= h
                pp, pm = arm.forward(qp), arm.forward(qm)
                fd_pos[:, j] = (pp.position - pm.position) / (2 * h)
                fd_rot[:, j] = rot @ (boxminus(pp.orientation, pm.orientation) / (2 * h))
            assert np.abs(jac[:3] - fd_pos).max() < 1e-5
            assert np.abs(jac[3:] - fd_rot).max() < 1e-5

    def test_reach_bound(self):
        # everything past the riser is a rigid chain: the end effector stays
        # within the summed link lengths of the riser top
        arm = ArmModel()
        rng = RNG(9)
        anchor = arm.offsets[0]
        reach = arm.reach()
        for _ in range(200):
            q = rng.uniform(-2.8, 2.8, 6)
            p = arm.forward(q).position
            assert np.linalg.norm(p - anchor) <= reach + 1e-9
