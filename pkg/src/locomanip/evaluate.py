"""Trajectory evaluation of trained checkpoints.

Each evaluation drives a single clean robot (no disturbances) along a
reference end-effector path in the control frame, optionally while the
base is commanded to walk.  The per-step log carries commanded and actual
base twist, end-effector pose and twist, foot heights and group rewards;
summary metrics are recomputable from the log alone.

Trajectory kinds:

- ``line``: out-and-back legs along each control-frame axis.
- ``circle``: YZ-plane circle in front of the robot.
- ``semicircle``: horizontal arc swept around the torso.
- ``workspace_sweep``: semicircle arcs over a radius x height grid.
- ``chicken_head``: hold a world-frame pose while the base velocity sweeps.

The end-effector orientation command points outward from the torso with the
tool x-axis along gravity, matching the goal-sampling reference.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .commands import reference_orientation
from .config import ExperimentConfig
from .env import DisturbanceConfig
from .lie import boxminus, quat_angle_batch, quat_conjugate, quat_from_rpy, quat_mul, quat_rotate, slerp
from .metrics import CsvLogger, read_csv
from .trainer import load_policy, make_task

TRAJECTORY_KINDS = ("line", "circle", "semicircle", "workspace_sweep", "chicken_head")


@dataclass
class EvalTrajectory:
    """Geometry and speed of one evaluation trajectory."""

    kind: str = "line"
    speed: float = 0.1  # m/s along the path
    line_length: float = 0.3
    circle_radius: float = 0.2
    semicircle_radius: float = 0.6
    semicircle_span: float = 2.0 * math.pi / 3.0  # rad swept each way
    sweep_radii: tuple = (0.5, 0.6, 0.7)
    sweep_heights: tuple = (0.3, 0.5, 0.7)
    chicken_duration: float = 12.0
    chicken_base_amplitude: float = 0.2

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"kind must be one of {TRAJECTORY_KINDS}")
        if self.speed <= 0.0:
            raise ValueError("speed must be positive")


def _oriented(pos: np.ndarray) -> np.ndarray:
    return reference_orientation(pos, np.zeros(3))


def _piecewise_path(points, speed: float):
    """Constant-speed polyline through control-frame points."""
    points = [np.asarray(p, dtype=np.float64) for p in points]
    lengths = [float(np.linalg.norm(b - a)) for a, b in zip(points[:-1], points[1:])]
    times = np.concatenate([[0.0], np.cumsum(lengths)]) / speed
    total = float(times[-1])

    def pose_at(t: float):
        t = min(max(t, 0.0), total)
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(k, len(points) - 2)
        seg = times[k + 1] - times[k]
        alpha = 0.0 if seg <= 0.0 else (t - times[k]) / seg
        pos = points[k] + alpha * (points[k + 1] - points[k])
        return pos, _oriented(pos)

    return pose_at, total


def build_path(traj: EvalTrajectory, start_pos: np.ndarray):
    """(pose_at(t), duration) for the path proper, starting at start_pos."""
    p0 = np.asarray(start_pos, dtype=np.float64)
    if traj.kind == "line":
        points = [p0]
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = traj.line_length
            points += [p0 + step, p0]
        return _piecewise_path(points, traj.speed)
    if traj.kind == "circle":
        center = p0 - np.array([0.0, traj.circle_radius, 0.0])
        omega = traj.speed / traj.circle_radius
        duration = 2.0 * math.pi / omega

        def pose_at(t: float):
            ang = omega * min(max(t, 0.0), duration)
            pos = center + traj.circle_radius * np.array([0.0, math.cos(ang), math.sin(ang)])
            return pos, _oriented(pos)

        return pose_at, duration
    if traj.kind == "semicircle":
        return _arc_path(traj.semicircle_radius, p0[2], traj.semicircle_span, traj.speed)
    if traj.kind == "workspace_sweep":
        segments = []
        for h in traj.sweep_heights:
            for r in traj.sweep_radii:
                segments.append(_arc_path(r, h, traj.semicircle_span, traj.speed))
        return _chain_paths(segments, traj.speed)
    raise ValueError(f"no static path for kind {traj.kind!r}")


def _arc_path(radius: float, height: float, span: float, speed: float):
    omega = speed / radius
    duration = 2.0 * span / omega

    def pose_at(t: float):
        t = min(max(t, 0.0), duration)
        ang = -span + omega * t
        pos = np.array([radius * math.cos(ang), radius * math.sin(ang), height])
        return pos, _oriented(pos)

    return pose_at, duration


def _chain_paths(segments, speed: float, blend_s: float = 1.5):
    """Concatenate paths with linear blends between end and start points."""
    entries = []
    t_total = 0.0
    prev_end = None
    for pose_at, duration in segments:
        start_pos, _ = pose_at(0.0)
        if prev_end is not None:
            blend_from = prev_end

            def blend(t, a=blend_from, b=start_pos):
                pos = a + min(t / blend_s, 1.0) * (b - a)
                return pos, _oriented(pos)

            entries.append((t_total, blend_s, blend))
            t_total += blend_s
        entries.append((t_total, duration, pose_at))
        t_total += duration
        prev_end, _ = pose_at(duration)

    def pose_at_total(t: float):
        t = min(max(t, 0.0), t_total)
        for start, duration, fn in entries:
            if t <= start + duration:
                return fn(t - start)
        return entries[-1][2](entries[-1][1])

    return pose_at_total, t_total


def eval_env_config(cfg: ExperimentConfig, horizon_s: float) -> ExperimentConfig:
    """Single clean robot: zero-width disturbances, no truncation."""
    quiet = DisturbanceConfig(
        friction_static=(1.0, 1.0), friction_dynamic=(1.0, 1.0),
        torso_mass=(0.0, 0.0), ee_mass=(0.0, 0.0),
        torso_force=(0.0, 0.0), torso_torque=(0.0, 0.0),
        ee_force=(0.0, 0.0), ee_torque=(0.0, 0.0),
        push_lin_vel=(0.0, 0.0), push_ang_vel=(0.0, 0.0),
    )
    env = dataclasses.replace(cfg.env, num_envs=1, episode_s=horizon_s + 60.0,
                              disturbances=quiet)
    return dataclasses.replace(cfg, env=env)


EVAL_COLUMNS = (
    "t", "in_path",
    "cmd_base_vx", "cmd_base_vy", "cmd_base_wz",
    "act_base_vx", "act_base_vy", "act_base_wz",
    "cmd_ee_x", "cmd_ee_y", "cmd_ee_z",
    "cmd_ee_qw", "cmd_ee_qx", "cmd_ee_qy", "cmd_ee_qz",
    "act_ee_x", "act_ee_y", "act_ee_z",
    "act_ee_qw", "act_ee_qx", "act_ee_qy", "act_ee_qz",
    "cmd_ee_vx", "cmd_ee_vy", "cmd_ee_vz",
    "cmd_ee_wx", "cmd_ee_wy", "cmd_ee_wz",
    "act_ee_vx", "act_ee_vy", "act_ee_vz",
    "act_ee_wx", "act_ee_wy", "act_ee_wz",
    "cmd_h_lf", "cmd_h_rf", "cmd_h_lh", "cmd_h_rh",
    "act_h_lf", "act_h_rf", "act_h_lh", "act_h_rh",
    "rew_locomotion", "rew_manipulation", "rew_contact_schedule",
)

EVAL_SCHEMA = {
    "t": {"unit": "s", "description": "time since evaluation start"},
    "in_path": {"unit": "bool", "description": "1 on the path proper, 0 during approach/settle"},
}


def run_eval(checkpoint, cfg: ExperimentConfig, traj: EvalTrajectory,
             walking: bool = False, out_dir=None, seed: int | None = None,
             walk_speed: float = 0.15, settle_s: float = 1.0) -> dict:
    """Execute one trajectory with the checkpointed policy.

    Returns summary metrics (delta_r, delta_theta, delta_rdot,
    delta_thetadot, saturation) and writes the per-step CSV when out_dir is
    given.  The evaluation never mutates the checkpoint.
    """
    policy, normalizer, meta = load_policy(checkpoint)
    seed = cfg.seed if seed is None else seed

    probe_cfg = eval_env_config(cfg, 10.0)
    probe = make_task(probe_cfg, seed)
    probe.set_iteration(cfg.ppo.iterations)
    start_ee = probe.env.ee_pos_ctrl[0].copy()

    chicken = traj.kind == "chicken_head"
    if chicken:
        path_duration = traj.chicken_duration
        pose_at = None
        hold_pos_ctrl = start_ee.copy()
        hold_quat_ctrl = _oriented(start_ee)
    else:
        pose_at, path_duration = build_path(traj, start_ee)
        hold_pos_ctrl = None
        hold_quat_ctrl = None

    approach_s = max(settle_s, 0.5)
    horizon_s = approach_s + path_duration + settle_s
    run_cfg = eval_env_config(cfg, horizon_s)
    task = make_task(run_cfg, seed)
    task.set_iteration(cfg.ppo.iterations)
    dt = task.dt
    env = task.env

    shoulder = env.shoulder_position_ctrl()
    reach = task.env.arm.reach() + 0.05
    clock = {"t": -approach_s}

    def source(tsk):
        t = clock["t"]
        if chicken:
            base_pos = tsk.env.base_pos[0]
            yaw = tsk.env.base_rpy[0, 2]
            q_wc = quat_from_rpy(0.0, 0.0, yaw)
            origin = np.array([base_pos[0], base_pos[1], tsk.env_cfg.physics.z_nominal])
            if t < 0.0:
                # record the world hold pose at the end of the settle phase
                wp = hold_pos_ctrl
                wq = hold_quat_ctrl
                base_cmd = np.zeros(3)
            else:
                wp = quat_rotate(quat_conjugate(q_wc), world_hold_pos - origin)
                wq = quat_mul(quat_conjugate(q_wc), world_hold_quat)
                phase = 2.0 * math.pi * t / traj.chicken_duration
                base_cmd = np.array([traj.chicken_base_amplitude * math.sin(phase), 0.0, 0.0])
            return {"wp_pos": wp[None, :], "wp_quat": wq[None, :],
                    "goal_pos": wp[None, :], "goal_quat": wq[None, :],
                    "base_cmd": base_cmd[None, :]}
        if t < 0.0:
            target_pos, target_quat = pose_at(0.0)
            alpha = min(1.0, (t + approach_s) / approach_s)
            wp = start_ee + alpha * (target_pos - start_ee)
            wq = slerp(_oriented(start_ee), target_quat, alpha)
        else:
            wp, wq = pose_at(min(t + dt, path_duration))
        goal_pos, goal_quat = (pose_at(path_duration) if pose_at else (wp, wq))
        base_cmd = np.array([walk_speed if walking else 0.0, 0.0, 0.0])
        return {"wp_pos": wp[None, :], "wp_quat": wq[None, :],
                "goal_pos": goal_pos[None, :], "goal_quat": goal_quat[None, :],
                "base_cmd": base_cmd[None, :]}

    world_hold_pos = np.zeros(3)
    world_hold_quat = np.array([1.0, 0.0, 0.0, 0.0])
    task.command_source = source
    task.compute_commands()

    logger = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        logger = CsvLogger(out_dir / "eval_steps.csv", EVAL_COLUMNS, EVAL_SCHEMA)

    pos_err2, ang_err, vel_err2, angvel_err2 = [], [], [], []
    saturated = 0
    path_steps = 0
    n_steps = int(round(horizon_s / dt))
    try:
        for k in range(n_steps):
            t = clock["t"]
            in_path = 1 if t >= 0.0 else 0
            obs = normalizer.normalize(task.observe())
            actions = policy.mean_action(obs)
            wp_pos = task.wp_pos[0].copy()
            wp_quat = task.wp_quat[0].copy()
            vee = task.vee_cmd[0].copy()
            wee = task.wee_cmd[0].copy()
            base_cmd = task.base_cmd[0].copy()
            foot_cmd = task.foot_cmd[0].copy()
            prev_pos = env.ee_pos_ctrl[0].copy()
            prev_quat = env.ee_quat_ctrl[0].copy()

            rewards, dones, timeouts, diag = task.step(actions[None, :] if actions.ndim == 1 else actions)

            ee_pos = env.ee_pos_ctrl[0]
            ee_quat = env.ee_quat_ctrl[0]
            v_act = (ee_pos - prev_pos) / dt
            w_act = boxminus(ee_quat, prev_quat) / dt
            if in_path:
                path_steps += 1
                err = wp_pos - ee_pos
                pos_err2.append(float(err @ err))
                ang_err.append(float(quat_angle_batch(wp_quat[None], ee_quat[None])[0]))
                dv = vee - v_act
                vel_err2.append(float(dv @ dv))
                dw = wee - w_act
                angvel_err2.append(float(dw @ dw))
                if np.linalg.norm(wp_pos - shoulder) > reach:
                    saturated += 1
            if chicken and k == int(round(approach_s / dt)) - 1:
                # freeze the world-frame hold pose where the settle ended
                yaw = env.base_rpy[0, 2]
                q_wc = quat_from_rpy(0.0, 0.0, yaw)
                origin = np.array([env.base_pos[0, 0], env.base_pos[0, 1],
                                   task.env_cfg.physics.z_nominal])
                world_hold_pos[:] = origin + quat_rotate(q_wc, env.ee_pos_ctrl[0])
                world_hold_quat[:] = quat_mul(q_wc, env.ee_quat_ctrl[0])
            if logger is not None:
                bt = task.env.state_at(0).base_twist
                row = {
                    "t": t, "in_path": in_path,
                    "cmd_base_vx": base_cmd[0], "cmd_base_vy": base_cmd[1],
                    "cmd_base_wz": base_cmd[2],
                    "act_base_vx": float(env.base_vel_xy[0, 0]),
                    "act_base_vy": float(env.base_vel_xy[0, 1]),
                    "act_base_wz": float(env.base_rpy_rate[0, 2]),
                    "rew_locomotion": float(rewards[0, 0]),
                    "rew_manipulation": float(rewards[0, 1]),
                    "rew_contact_schedule": float(rewards[0, 2]),
                }
                for name, vec in (("cmd_ee", np.r_[wp_pos, wp_quat]),
                                  ("act_ee", np.r_[ee_pos, ee_quat])):
                    for suffix, value in zip(("x", "y", "z", "qw", "qx", "qy", "qz"), vec):
                        row[f"{name}_{suffix}"] = float(value)
                for name, vec in (("cmd_ee", np.r_[vee, wee]), ("act_ee", np.r_[v_act, w_act])):
                    for suffix, value in zip(("vx", "vy", "vz", "wx", "wy", "wz"), vec):
                        row[f"{name}_{suffix}"] = float(value)
                for name, vec in (("cmd_h", foot_cmd), ("act_h", env.leg_heights[0])):
                    for suffix, value in zip(("lf", "rf", "lh", "rh"), vec):
                        row[f"{name}_{suffix}"] = float(value)
                logger.write(row)
            clock["t"] += dt
    finally:
        if logger is not None:
            logger.close()

    summary = {
        "delta_r": float(np.sqrt(np.mean(pos_err2))) if pos_err2 else float("nan"),
        "delta_theta": float(np.mean(ang_err)) if ang_err else float("nan"),
        "delta_rdot": float(np.sqrt(np.mean(vel_err2))) if vel_err2 else float("nan"),
        "delta_thetadot": float(np.sqrt(np.mean(angvel_err2))) if angvel_err2 else float("nan"),
        "saturation": saturated / max(path_steps, 1),
        "path_duration": path_duration,
        "walking": float(walking),
        "speed": traj.speed,
        "kind": traj.kind,
    }
    if out_dir is not None:
        cols = tuple(summary.keys())
        with CsvLogger(Path(out_dir) / "eval_summary.csv", cols, {}) as sl:
            sl.write(summary)
    return summary


def recompute_summary(steps_csv) -> dict:
    """Recompute delta_r / delta_rdot / delta_theta from a per-step log."""
    columns, rows = read_csv(steps_csv)
    idx = {c: i for i, c in enumerate(columns)}
    pos_err2, vel_err2, ang = [], [], []
    for row in rows:
        if row[idx["in_path"]] < 0.5:
            continue
        dr = np.array([row[idx[f"cmd_ee_{a}"]] - row[idx[f"act_ee_{a}"]] for a in "xyz"])
        pos_err2.append(float(dr @ dr))
        dv = np.array([row[idx[f"cmd_ee_v{a}"]] - row[idx[f"act_ee_v{a}"]] for a in "xyz"])
        vel_err2.append(float(dv @ dv))
        q_cmd = np.array([row[idx[f"cmd_ee_q{a}"]] for a in "wxyz"])
        q_act = np.array([row[idx[f"act_ee_q{a}"]] for a in "wxyz"])
        ang.append(float(quat_angle_batch(q_cmd[None], q_act[None])[0]))
    return {
        "delta_r": float(np.sqrt(np.mean(pos_err2))),
        "delta_theta": float(np.mean(ang)),
        "delta_rdot": float(np.sqrt(np.mean(vel_err2))),
    }
