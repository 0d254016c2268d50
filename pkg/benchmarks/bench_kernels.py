#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-compiled vs pure-Python fallback.

The same source runs on both paths (see locomanip.accel); this script times
them side by side.  Run after an editable install:

    python benchmarks/bench_kernels.py [--repeats 50]

Numbers are per call for the desk-scale batch size (64 robots).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from locomanip.accel import NUMBA_ENABLED, python_impl
from locomanip.commands import foot_heights_kernel, goal_orientation_kernel
from locomanip.config import load_config
from locomanip.env import physics_vector
from locomanip.lie import boxminus, boxplus, slerp
from locomanip.ppo import gae_kernel
from locomanip.rewards import NUM_TERMS, reward_terms_kernel
from locomanip.task import waypoint_twist_kernel
from locomanip.trainer import make_task


def timeit(fn, repeats):
    fn()  # warm (compilation on the jit path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench(name, kernel, args_fn, repeats):
    compiled = timeit(lambda: kernel(*args_fn()), repeats)
    py = python_impl(kernel)
    fallback = timeit(lambda: py(*args_fn()), max(1, repeats // 10))
    speedup = fallback / compiled if compiled > 0 else float("inf")
    print(f"{name:24s} compiled {compiled * 1e6:9.1f} us   "
          f"python {fallback * 1e6:11.1f} us   speedup {speedup:7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    if not NUMBA_ENABLED:
        print("LOCOMANIP_NUMBA=0: both columns run the same Python path")

    rng = np.random.default_rng(0)
    cfg = load_config(profile="desk", use_env=False)
    task = make_task(cfg, 0)
    env = task.env
    n = env.n

    print(f"batch of {n} robots, float64\n")

    # full environment step
    actions = rng.uniform(-0.2, 0.2, (n, env.n_joints))
    targets, nan_mask = env.apply_actions(actions)

    def env_step_args():
        return ()

    def run_env_step():
        env.step(targets, task.base_cmd, task.foot_cmd, nan_mask)

    compiled = timeit(run_env_step, args.repeats)
    print(f"{'env step (via wrapper)':24s} compiled {compiled * 1e6:9.1f} us")

    # reward evaluation
    prev_pos = env.ee_pos_ctrl.copy()
    prev_quat = env.ee_quat_ctrl.copy()
    out = np.zeros((n, NUM_TERMS))
    sigma = cfg.rewards.sigma_vector()

    def reward_args():
        return (prev_pos, prev_quat, env.ee_pos_ctrl, env.ee_quat_ctrl,
                task.vee_cmd, task.wee_cmd, env.base_vel_xy, task.base_cmd,
                env.base_rpy_rate[:, 2], env.base_pos[:, 2], env.base_rpy,
                env.base_rpy_rate, env.base_vz, env.contacts, env.slip_speed,
                env.forces, env.leg_heights, task.foot_cmd, env.air_hist,
                env.contact_hist, env.air_hist_n, env.contact_hist_n,
                env.new_contact, env.air_at_contact, actions, actions,
                env.joint_torque, env.joint_vel, env.terminated, env.n_robot,
                env.n_arm, env.n_leg_dof, 0.35, 0.02, sigma, out)

    bench("reward terms", reward_terms_kernel, reward_args, args.repeats)

    # waypoint + twist generation
    wp_pos = np.zeros((n, 3))
    wp_quat = np.zeros((n, 4))
    v_out = np.zeros((n, 3))
    w_out = np.zeros((n, 3))

    def waypoint_args():
        return (task.traj_start_pos, task.traj_start_quat, task.traj_goal_pos,
                task.traj_goal_quat, task.traj_duration, task.traj_t,
                task.traj_local, env.ee_pos_ctrl, env.ee_quat_ctrl, 0.02, 0.5,
                wp_pos, wp_quat, v_out, w_out)

    bench("waypoint twist", waypoint_twist_kernel, waypoint_args, args.repeats)

    # GAE scan at rollout size
    t_steps = cfg.ppo.steps_per_env
    rewards = rng.standard_normal((t_steps, n))
    values = rng.standard_normal((t_steps, n))
    bootstrap = rng.standard_normal(n)
    dones = (rng.uniform(size=(t_steps, n)) < 0.02).astype(np.float64)
    adv = np.zeros((t_steps, n))

    bench("gae scan", gae_kernel,
          lambda: (rewards, values, bootstrap, dones, 0.99, 0.95, adv),
          args.repeats)

    # gait heights
    bench("foot heights", foot_heights_kernel,
          lambda: (0.37, np.array([0.0, 0.5, 0.25, 0.75]), 0.08), args.repeats)

    # goal orientations
    positions = rng.uniform(-0.5, 0.5, (n, 3))
    tilts = rng.uniform(-0.7, 0.7, (n, 3))
    quats = np.zeros((n, 4))
    bench("goal orientations", goal_orientation_kernel,
          lambda: (positions, np.zeros(3), tilts, quats), args.repeats)

    # scalar rotation ops
    q1 = rng.standard_normal(4)
    q1 /= np.linalg.norm(q1)
    q2 = rng.standard_normal(4)
    q2 /= np.linalg.norm(q2)
    v = rng.standard_normal(3)
    bench("boxplus (scalar)", boxplus, lambda: (q1, v), args.repeats * 10)
    bench("boxminus (scalar)", boxminus, lambda: (q1, q2), args.repeats * 10)
    bench("slerp (scalar)", slerp, lambda: (q1, q2, 0.37), args.repeats * 10)


if __name__ == "__main__":
    main()
