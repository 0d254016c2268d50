"""Training loops: teacher PPO and teacher-student distillation.

Both write a resolved-config snapshot, a per-iteration metrics CSV with a
schema sidecar, and a binary checkpoint.  Given identical config and seed,
two runs produce byte-identical artifacts.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, save_snapshot
from .metrics import CsvLogger
from .neural import Adam, GaussianPolicy, RunningNormalizer, load_arrays, save_arrays
from .ppo import MultiCriticAgent, RolloutBuffer
from .task import LocomanipTask

TRAIN_COLUMNS = (
    "iteration", "env_steps",
    "rew_locomotion", "rew_manipulation", "rew_contact_schedule",
    "value_loss_0", "value_loss_1", "value_loss_2",
    "surrogate_loss", "entropy",
    "ee_pos_rmse", "ee_ori_rmse", "base_vel_rmse", "base_ang_rmse",
    "base_track_reward", "ee_track_reward",
    "gait_quality", "terminations",
)

TRAIN_SCHEMA = {
    "iteration": {"unit": "count", "description": "learning iteration, 0-based"},
    "env_steps": {"unit": "count", "description": "cumulative environment steps"},
    "rew_locomotion": {"unit": "reward/step", "description": "mean locomotion group reward"},
    "rew_manipulation": {"unit": "reward/step", "description": "mean manipulation group reward"},
    "rew_contact_schedule": {"unit": "reward/step", "description": "mean contact-schedule group reward"},
    "value_loss_0": {"unit": "reward^2", "description": "critic 0 value loss (locomotion; the only critic in single-critic mode)"},
    "value_loss_1": {"unit": "reward^2", "description": "critic 1 value loss (manipulation; 0 in single-critic mode)"},
    "value_loss_2": {"unit": "reward^2", "description": "critic 2 value loss (contact schedule; 0 in single-critic mode)"},
    "surrogate_loss": {"unit": "-", "description": "negated clipped surrogate objective"},
    "entropy": {"unit": "nat", "description": "policy entropy"},
    "ee_pos_rmse": {"unit": "m", "description": "RMS distance between end-effector and its waypoint, control frame"},
    "ee_ori_rmse": {"unit": "rad", "description": "RMS angular error to the waypoint orientation"},
    "base_vel_rmse": {"unit": "m/s", "description": "RMS planar base velocity error"},
    "base_ang_rmse": {"unit": "rad/s", "description": "RMS base yaw-rate error"},
    "base_track_reward": {"unit": "score/step", "description": "base velocity tracking score 2*exp(-|dv|^2/0.004) + 2*exp(-dw^2/0.002); fixed widths, comparable across runs"},
    "ee_track_reward": {"unit": "score/step", "description": "end-effector waypoint tracking score 5*exp(-|dr|^2/0.005) + 4*exp(-dtheta^2/0.01); fixed widths, comparable across runs"},
    "gait_quality": {"unit": "-", "description": "mean propulsion quality in [0, 1]"},
    "terminations": {"unit": "count", "description": "terminations during the iteration"},
}


def make_task(cfg: ExperimentConfig, task_seed: int) -> LocomanipTask:
    return LocomanipTask(cfg.env, cfg.commands, cfg.rewards, task_seed,
                         cfg.curriculum_switch_iteration())


def save_checkpoint(path, actor: GaussianPolicy, critics, normalizer, meta: dict) -> None:
    arrays = actor.state_arrays("actor")
    for i, critic in enumerate(critics):
        arrays.update(critic.state_arrays(f"critic{i}"))
    arrays.update(normalizer.state_arrays("normalizer"))
    arrays["meta.num_critics"] = np.asarray([float(len(critics))])
    for key, value in meta.items():
        arrays[f"meta.{key}"] = np.asarray([float(value)])
    save_arrays(path, arrays)


def load_policy(path):
    """(policy, normalizer, meta) from a checkpoint file."""
    arrays = load_arrays(path)
    policy = GaussianPolicy.from_state(arrays, "actor")
    normalizer = RunningNormalizer.from_state(arrays, "normalizer")
    meta = {k[len("meta."):]: float(v[0]) for k, v in arrays.items()
            if k.startswith("meta.")}
    return policy, normalizer, meta


def _seeds(root_seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(root_seed).spawn(count)]


def train(cfg: ExperimentConfig, out_dir) -> dict:
    """Run teacher PPO; returns artifact paths and final-window statistics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = out_dir / "config_resolved.yaml"
    save_snapshot(cfg, snapshot)

    ss = np.random.SeedSequence(cfg.seed)
    task_seed = int(ss.generate_state(1)[0])
    net_rng, act_rng, shuffle_rng = _seeds(cfg.seed + 1, 3)

    task = make_task(cfg, task_seed)
    num_critics = cfg.num_critics
    agent = MultiCriticAgent(task.obs_dim, task.num_actions, cfg.ppo,
                             num_critics, net_rng)
    normalizer = RunningNormalizer(task.obs_dim)
    buffer = RolloutBuffer(cfg.ppo.steps_per_env, cfg.env.num_envs,
                           task.obs_dim, task.num_actions, num_critics)

    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "checkpoint.bin"
    gamma = cfg.ppo.gamma
    env_steps = 0
    t_start = time.perf_counter()
    with CsvLogger(metrics_path, TRAIN_COLUMNS, TRAIN_SCHEMA) as logger:
        for it in range(cfg.ppo.iterations):
            task.set_iteration(it)
            diag_sums: dict = {}
            terminations = 0.0
            for _ in range(cfg.ppo.steps_per_env):
                raw = task.observe()
                normalizer.update(raw)
                obs = normalizer.normalize(raw)
                actions, logp, _ = agent.actor.act(obs, act_rng)
                values = agent.values(obs)
                rewards3, dones, timeouts, diag = task.step(actions)
                rewards = rewards3 if num_critics == 3 else rewards3.sum(axis=1, keepdims=True)
                if timeouts.any():
                    final_obs = normalizer.normalize(diag["final_obs"][timeouts])
                    rewards[timeouts] += gamma * agent.values(final_obs)
                buffer.add(obs, actions, logp, rewards, values, dones.astype(np.float64))
                terminations += float(diag["terminated"].sum())
                for key in ("ee_pos_err", "ee_ori_err", "base_vel_err", "base_ang_err",
                            "base_track_reward", "ee_track_reward", "gait_quality"):
                    acc = diag_sums.setdefault(key, [])
                    acc.append(diag[key])
                env_steps += task.n

            bootstrap = agent.values(normalizer.normalize(task.observe()))
            stats = agent.update(buffer, bootstrap, shuffle_rng)
            mean_rewards = buffer.rewards.mean(axis=(0, 1))
            buffer.clear()

            def rmse(key):
                return float(np.sqrt(np.mean(np.square(np.concatenate(diag_sums[key])))))

            def mean_of(key):
                return float(np.mean(np.concatenate(diag_sums[key])))

            vloss = np.zeros(3)
            vloss[:num_critics] = stats["value_loss"]
            row = {
                "iteration": it,
                "env_steps": env_steps,
                "rew_locomotion": float(mean_rewards[0]),
                "rew_manipulation": float(mean_rewards[1]) if num_critics == 3 else 0.0,
                "rew_contact_schedule": float(mean_rewards[2]) if num_critics == 3 else 0.0,
                "value_loss_0": float(vloss[0]),
                "value_loss_1": float(vloss[1]),
                "value_loss_2": float(vloss[2]),
                "surrogate_loss": float(stats["surrogate_loss"]),
                "entropy": float(stats["entropy"]),
                "ee_pos_rmse": rmse("ee_pos_err"),
                "ee_ori_rmse": rmse("ee_ori_err"),
                "base_vel_rmse": rmse("base_vel_err"),
                "base_ang_rmse": rmse("base_ang_err"),
                "base_track_reward": mean_of("base_track_reward"),
                "ee_track_reward": mean_of("ee_track_reward"),
                "gait_quality": mean_of("gait_quality"),
                "terminations": terminations,
            }
            logger.write(row)
            if cfg.ppo.checkpoint_every and (it + 1) % cfg.ppo.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint_{it + 1:06d}.bin",
                                agent.actor, agent.critics, normalizer,
                                {"iteration": it + 1, "mode_single": num_critics == 1})

    save_checkpoint(ckpt_path, agent.actor, agent.critics, normalizer,
                    {"iteration": cfg.ppo.iterations,
                     "mode_single": num_critics == 1})
    return {
        "checkpoint": str(ckpt_path),
        "metrics": str(metrics_path),
        "config": str(snapshot),
        "wall_s": time.perf_counter() - t_start,
    }


DISTILL_COLUMNS = ("iteration", "train_mse", "eval_mse")
DISTILL_SCHEMA = {
    "iteration": {"unit": "count", "description": "distillation iteration"},
    "train_mse": {"unit": "action^2", "description": "segment MSE between student and teacher actions"},
    "eval_mse": {"unit": "action^2", "description": "held-out MSE; empty between evaluation points"},
}


def distill(cfg: ExperimentConfig, teacher_ckpt, out_dir,
            student_noise: bool = True, student_privileged: bool = False) -> dict:
    """Distill the teacher into a student driven by masked, noisy inputs.

    The student acts in the environment with its mean action; the frozen
    teacher labels every visited state from clean privileged observations.
    Updates run over truncated segments of gradient_length steps.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_snapshot(cfg, out_dir / "config_resolved.yaml")
    teacher, normalizer, meta = load_policy(teacher_ckpt)

    ss = np.random.SeedSequence(cfg.seed)
    task_seed, eval_seed = [int(s) for s in ss.generate_state(2)]
    net_rng, noise_rng, eval_noise_rng = _seeds(cfg.seed + 1, 3)

    task = make_task(cfg, task_seed)
    eval_task = make_task(cfg, eval_seed)
    # the curriculum has finished by deployment time: command in control frame
    task.set_iteration(cfg.ppo.iterations)
    eval_task.set_iteration(cfg.ppo.iterations)

    sizes = teacher.mean_net.sizes
    student = GaussianPolicy(sizes[0], sizes[-1], sizes[1:-1],
                             teacher.mean_net.activation, net_rng)
    opt = Adam(student.mean_net.parameters(), lr=cfg.distill.learning_rate)
    dcfg = cfg.distill

    def student_obs(tsk, rng):
        return normalizer.normalize(tsk.observe(
            privileged=student_privileged,
            noise_rng=rng if student_noise else None))

    def eval_mse() -> float:
        total, count = 0.0, 0
        for _ in range(dcfg.eval_steps):
            obs_t = normalizer.normalize(eval_task.observe())
            obs_s = student_obs(eval_task, eval_noise_rng)
            a_s = student.mean_action(obs_s)
            a_t = teacher.mean_action(obs_t)
            total += float(np.mean((a_s - a_t) ** 2))
            count += 1
            eval_task.step(a_s)
        return total / count

    metrics_path = out_dir / "metrics.csv"
    ckpt_path = out_dir / "student.bin"
    evals = []
    with CsvLogger(metrics_path, DISTILL_COLUMNS, DISTILL_SCHEMA) as logger:
        for it in range(dcfg.iterations):
            obs_s_seg = []
            obs_t_seg = []
            for _ in range(dcfg.gradient_length):
                obs_t = normalizer.normalize(task.observe())
                obs_s = student_obs(task, noise_rng)
                obs_s_seg.append(obs_s)
                obs_t_seg.append(obs_t)
                task.step(student.mean_action(obs_s))
            obs_s_all = np.concatenate(obs_s_seg, axis=0)
            obs_t_all = np.concatenate(obs_t_seg, axis=0)
            target = teacher.mean_action(obs_t_all)
            train_mse = 0.0
            for _ in range(dcfg.epochs):
                mean, cache = student.mean_net.forward_cached(obs_s_all)
                err = mean - target
                train_mse = float(np.mean(err * err))
                grad = 2.0 * err / err.size
                grads, _ = student.mean_net.backward(cache, grad)
                opt.step(grads)
            row = {"iteration": it, "train_mse": train_mse, "eval_mse": ""}
            if (it + 1) % dcfg.eval_every == 0 or it == dcfg.iterations - 1:
                value = eval_mse()
                evals.append(value)
                row["eval_mse"] = value
            logger.write(row)

    save_checkpoint(ckpt_path, student, [], normalizer,
                    {"iteration": dcfg.iterations, "student": 1.0,
                     "teacher_iteration": meta.get("iteration", 0.0)})
    return {
        "checkpoint": str(ckpt_path),
        "metrics": str(metrics_path),
        "eval_mse": evals,
    }
