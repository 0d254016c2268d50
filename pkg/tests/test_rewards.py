"""Reward term values against hand-evaluated oracles, plus group separation."""

import math

import numpy as np
import pytest

from locomanip.commands import CommandVector, Twist
from locomanip.env import NUM_FEET, RobotState
from locomanip.lie import Pose, quat_from_rpy, quat_identity
from locomanip.rewards import (
    GroupedReward,
    NUM_TERMS,
    RewardConfig,
    TERM_GROUP,
    TERM_NAMES,
    air_time_rewards,
    compute_reward_terms,
    compute_rewards,
    feet_contact_reward,
    gaussian_kernel,
)

RNG = np.random.default_rng


def test_gaussian_kernel_zero_and_value():
    assert gaussian_kernel(np.zeros(3), 0.1) == 1.0
    assert gaussian_kernel(np.zeros(1), 7.0) == 1.0
    # exp(-0.01 / 0.1) evaluated directly
    assert abs(gaussian_kernel([0.1, 0.0, 0.0], 0.1) - math.exp(-0.1)) < 1e-15
    assert abs(gaussian_kernel([0.1, 0.0, 0.0], 0.1) - 0.9048374180359595) < 1e-12


def test_gaussian_kernel_monotone_decreasing():
    vals = [gaussian_kernel([x, 0.0], 0.05) for x in np.linspace(0.0, 2.0, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_gaussian_kernel_domain():
    with pytest.raises(ValueError):
        gaussian_kernel([1.0], 0.0)
    with pytest.raises(ValueError):
        gaussian_kernel([1.0], -0.5)


def _perfect_state(n_joints=10, n_leg=4):
    """All tracking errors zero: settled stance, loaded feet, no motion."""
    return RobotState(
        base_pos=np.array([0.0, 0.0, 0.35]),
        base_rpy=np.zeros(3),
        base_vel_xy=np.zeros(2),
        base_vz=0.0,
        base_rpy_rate=np.zeros(3),
        joints=np.zeros(n_joints),
        joint_vel=np.zeros(n_joints),
        joint_targets=np.zeros(n_joints),
        joint_torque=np.zeros(n_joints),
        leg_heights=np.zeros(NUM_FEET),
        contacts=np.ones(NUM_FEET, dtype=bool),
        forces=np.full(NUM_FEET, 98.0),
        slip_speed=np.zeros(NUM_FEET),
        air_time=np.zeros(NUM_FEET),
        contact_time=np.full(NUM_FEET, 1.0),
        air_hist=np.zeros((NUM_FEET, 3)),
        contact_hist=np.zeros((NUM_FEET, 3)),
        air_hist_n=np.zeros(NUM_FEET),
        contact_hist_n=np.zeros(NUM_FEET),
        new_contact=np.zeros(NUM_FEET, dtype=bool),
        air_at_contact=np.zeros(NUM_FEET),
        ee_pos_ctrl=np.array([0.9, 0.0, -0.1]),
        ee_quat_ctrl=quat_identity(),
        terminated=False,
        n_undesired_robot=0.0,
        n_undesired_arm=0.0,
        n_leg_dof=n_leg,
    )


def _zero_command():
    return CommandVector(goal_pose=Pose([0.9, 0.0, -0.1], quat_identity()))


def test_perfect_tracking_reward_sums():
    """Hand sum: every kernel at 1 times its weight, plus is-alive."""
    state = _perfect_state()
    cfg = RewardConfig()
    out = compute_rewards(state, _perfect_state(), np.zeros(10), np.zeros(10),
                          _zero_command(), cfg, dt=0.02, z_nominal=0.35)
    # locomotion: 2 + 2 + 0.5 + 0.1 + 0.5 + 2.5 + 0.05 (alive)
    #             + 0.001 + 1e-5 + 1e-4 (regularizers at their zero values)
    expected_loco = 2.0 + 2.0 + 0.5 + 0.1 + 0.5 + 2.5 + 0.05 + 0.001 + 1e-5 + 1e-4
    assert abs(out.loco - expected_loco) < 1e-12
    # manipulation: 5 + 4 + 0.1 + 1e-5 + 1e-4
    expected_mani = 5.0 + 4.0 + 0.1 + 1e-5 + 1e-4
    assert abs(out.mani - expected_mani) < 1e-12
    # contact schedule: all four feet loaded and not slipping -> 4, no air
    # history yet -> variance and air-time terms zero
    assert abs(out.contact - 4.0) < 1e-12


def test_termination_contributes_minus_400():
    state = _perfect_state()
    state.terminated = True
    cfg = RewardConfig()
    out = compute_rewards(state, _perfect_state(), np.zeros(10), np.zeros(10),
                          _zero_command(), cfg)
    base = compute_rewards(_perfect_state(), _perfect_state(), np.zeros(10),
                           np.zeros(10), _zero_command(), cfg)
    # alive bonus (0.05) flips off and the termination penalty lands
    assert abs((out.loco - base.loco) - (-400.0 - 0.05)) < 1e-12


def test_ee_terms_full_reward_when_following_twist():
    rng = RNG(0)
    prev = _perfect_state()
    state = _perfect_state()
    v = rng.standard_normal(3) * 0.1
    w = rng.standard_normal(3) * 0.5
    dt = 0.02
    state.ee_pos_ctrl = prev.ee_pos_ctrl + v * dt
    from locomanip.lie import boxplus

    state.ee_quat_ctrl = boxplus(prev.ee_quat_ctrl, w * dt)
    cmd = _zero_command()
    cmd.ee_twist = Twist(v, w)
    values = compute_reward_terms(state, prev, np.zeros(10), np.zeros(10), cmd,
                                  RewardConfig(), dt=dt)
    names = list(TERM_NAMES)
    assert abs(values[names.index("ee_position")] - 1.0) < 1e-9
    assert abs(values[names.index("ee_orientation")] - 1.0) < 1e-9


def test_feet_contact_reward_cases():
    # all four feet loaded, no slip
    assert feet_contact_reward([True] * 4, [50.0] * 4, [0.0] * 4, [0.0] * 4,
                               [0.0] * 4) == pytest.approx(4.0)
    # one swing foot tracking its commanded height exactly, unloaded
    val = feet_contact_reward([False, True, True, True], [0.0, 50.0, 50.0, 50.0],
                              [0.05, 0.0, 0.0, 0.0], [0.05, 0.0, 0.0, 0.0],
                              [0.0] * 4)
    assert val == pytest.approx(4.0)
    # swing foot carrying force decays toward zero contribution
    val = feet_contact_reward([False, True, True, True], [30.0, 50.0, 50.0, 50.0],
                              [0.05, 0.0, 0.0, 0.0], [0.05, 0.0, 0.0, 0.0],
                              [0.0] * 4)
    assert val == pytest.approx(3.0, abs=1e-9)
    # stance foot under 1 N is not loaded: no stance credit
    val = feet_contact_reward([True] * 4, [0.5, 50.0, 50.0, 50.0],
                              [0.0] * 4, [0.0] * 4, [0.0] * 4)
    assert val == pytest.approx(3.0)
    with pytest.raises(ValueError):
        feet_contact_reward([True] * 4, [-1.0, 0, 0, 0], [0] * 4, [0] * 4, [0] * 4)


def test_air_time_rewards_oracle():
    # population variance of [0.2, 0.3, 0.4] is 0.00666...
    air = [[0.2, 0.3, 0.4], [], [], []]
    contact = [[0.3, 0.3, 0.3], [], [], []]
    var_term, bonus = air_time_rewards(air, contact, new_contacts=[False] * 4)
    assert var_term == pytest.approx(-(0.02 / 3.0))
    assert bonus == 0.0
    # warm-up: fewer than three intervals contribute nothing
    var_term, _ = air_time_rewards([[0.2, 0.3], [], [], []], [[], [], [], []])
    assert var_term == 0.0
    # a new contact pays out the just-completed swing duration
    _, bonus = air_time_rewards(air, contact, new_contacts=[True, False, False, False])
    assert bonus == pytest.approx(0.4)


def test_periodic_gait_zero_variance():
    air = [[0.25, 0.25, 0.25]] * 4
    contact = [[0.45, 0.45, 0.45]] * 4
    var_term, _ = air_time_rewards(air, contact)
    assert var_term == 0.0


def test_group_separation():
    """Perturbing state blocks touches only the matching reward group."""
    cfg = RewardConfig()
    base_args = (np.zeros(10), np.zeros(10), _zero_command())

    def groups(state, prev):
        out = compute_rewards(state, prev, *base_args, cfg)
        return out.as_array()

    ref = groups(_perfect_state(), _perfect_state())

    # end-effector pose only -> manipulation only
    s = _perfect_state()
    s.ee_pos_ctrl = s.ee_pos_ctrl + [0.05, 0.0, 0.0]
    d = groups(s, _perfect_state()) - ref
    assert d[1] != 0.0 and d[0] == 0.0 and d[2] == 0.0

    # base velocity only -> locomotion only
    s = _perfect_state()
    s.base_vel_xy = np.array([0.2, 0.0])
    d = groups(s, _perfect_state()) - ref
    assert d[0] != 0.0 and d[1] == 0.0 and d[2] == 0.0

    # contact flags / forces only -> contact schedule only (a swing-flagged
    # foot still carrying force scores a near-zero swing kernel)
    s = _perfect_state()
    s.contacts = np.array([False, True, True, True])
    d = groups(s, _perfect_state()) - ref
    assert d[2] != 0.0 and d[0] == 0.0 and d[1] == 0.0


def test_rewards_pure_function():
    state = _perfect_state()
    state.base_vel_xy = np.array([0.13, -0.22])
    args = (state, _perfect_state(), np.full(10, 0.1), np.zeros(10),
            _zero_command(), RewardConfig())
    a = compute_rewards(*args)
    b = compute_rewards(*args)
    assert a.loco == b.loco and a.mani == b.mani and a.contact == b.contact


def test_kernel_terms_bounded_and_penalties_negative():
    rng = RNG(1)
    cfg = RewardConfig()
    w = cfg.weight_vector()
    for _ in range(50):
        state = _perfect_state()
        state.base_vel_xy = rng.standard_normal(2)
        state.base_rpy = rng.standard_normal(3) * 0.3
        state.base_rpy_rate = rng.standard_normal(3)
        state.ee_pos_ctrl = state.ee_pos_ctrl + rng.standard_normal(3) * 0.1
        state.terminated = bool(rng.uniform() < 0.3)
        state.n_undesired_robot = float(rng.integers(0, 3))
        values = compute_reward_terms(state, _perfect_state(),
                                      rng.standard_normal(10), np.zeros(10),
                                      _zero_command(), cfg)
        weighted = values * w
        for k, name in enumerate(TERM_NAMES):
            if name in ("is_terminated", "undesired_robot_contacts",
                        "undesired_arm_contacts", "feet_air_time_variance"):
                assert weighted[k] <= 0.0
            elif name in ("is_alive", "feet_contact", "feet_air_time"):
                assert weighted[k] >= 0.0
            else:
                assert 0.0 < weighted[k] <= w[k] + 1e-12


def test_group_scales_multiply_groups():
    cfg = RewardConfig(group_scales=(2.0, 3.0, 5.0))
    base = RewardConfig()
    state = _perfect_state()
    out = compute_rewards(state, _perfect_state(), np.zeros(10), np.zeros(10),
                          _zero_command(), cfg)
    ref = compute_rewards(state, _perfect_state(), np.zeros(10), np.zeros(10),
                          _zero_command(), base)
    assert out.loco == pytest.approx(2.0 * ref.loco)
    assert out.mani == pytest.approx(3.0 * ref.mani)
    assert out.contact == pytest.approx(5.0 * ref.contact)


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(weights={"bogus": 1.0})
    with pytest.raises(ValueError):
        RewardConfig(sigma_sq={"ee_position": -1.0})
    with pytest.raises(ValueError):
        RewardConfig(group_scales=(1.0, 1.0))


def test_grouped_reward_total():
    g = GroupedReward(1.0, 2.0, 3.0)
    assert g.total() == 6.0
    np.testing.assert_array_equal(g.as_array(), [1.0, 2.0, 3.0])
    assert TERM_GROUP.shape == (NUM_TERMS,)
