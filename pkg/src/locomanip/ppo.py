"""Multi-critic PPO primitives.

One actor, one critic per reward group.  Advantages are estimated with
GAE per group, normalized per group over the whole collected batch, and
summed into the policy advantage — no weighting factors anywhere.  The
single-critic baseline collapses the groups into one reward stream and one
critic while leaving every other code path untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .accel import jit_kernel
from .neural import GaussianPolicy

ADV_EPS = 1e-8


class NumericError(RuntimeError):
    """A loss or gradient became non-finite; the update was aborted."""


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 8
    minibatches: int = 4
    entropy_coef: float = 0.002
    value_loss_coef: float = 1.0
    steps_per_env: int = 24
    iterations: int = 2000
    hidden: tuple = (128, 64, 32)
    activation: str = "elu"
    log_std_init: float = 0.0
    log_std_bounds: tuple = (-4.0, 1.0)
    adv_norm_scope: str = "batch"  # or "minibatch"
    checkpoint_every: int = 0  # 0: only final

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        for name in ("learning_rate", "gamma", "gae_lambda", "epochs",
                     "minibatches", "steps_per_env", "iterations"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.adv_norm_scope not in ("batch", "minibatch"):
            raise ValueError("adv_norm_scope must be 'batch' or 'minibatch'")


@dataclass
class DistillConfig:
    learning_rate: float = 1e-3
    epochs: int = 8
    gradient_length: int = 15
    iterations: int = 300
    eval_every: int = 10
    eval_steps: int = 96

    def __post_init__(self):
        if self.gradient_length < 1:
            raise ValueError("gradient_length must be at least 1")


class RolloutBuffer:
    """Fixed-capacity on-policy storage, (steps, envs) major."""

    def __init__(self, steps: int, num_envs: int, obs_dim: int,
                 action_dim: int, num_groups: int):
        self.steps = steps
        self.num_envs = num_envs
        self.num_groups = num_groups
        self.obs = np.zeros((steps, num_envs, obs_dim))
        self.actions = np.zeros((steps, num_envs, action_dim))
        self.log_probs = np.zeros((steps, num_envs))
        self.rewards = np.zeros((steps, num_envs, num_groups))
        self.values = np.zeros((steps, num_envs, num_groups))
        self.dones = np.zeros((steps, num_envs))
        self.cursor = 0

    def add(self, obs, actions, log_probs, rewards, values, dones) -> None:
        if self.cursor >= self.steps:
            raise RuntimeError("rollout buffer is full")
        t = self.cursor
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.rewards[t] = rewards
        self.values[t] = values
        self.dones[t] = dones
        self.cursor += 1

    @property
    def full(self) -> bool:
        return self.cursor == self.steps

    def clear(self) -> None:
        self.cursor = 0


@jit_kernel
def gae_kernel(rewards, values, bootstrap, dones, gamma, lam, adv_out):
    """Reverse-scan GAE over (T, N) arrays; dones cut the bootstrap chain."""
    t_steps, n = rewards.shape
    for i in range(n):
        acc = 0.0
        for t in range(t_steps - 1, -1, -1):
            if t == t_steps - 1:
                v_next = bootstrap[i]
            else:
                v_next = values[t + 1, i]
            nonterminal = 0.0 if dones[t, i] > 0.5 else 1.0
            delta = rewards[t, i] + gamma * v_next * nonterminal - values[t, i]
            acc = delta + gamma * lam * nonterminal * acc
            adv_out[t, i] = acc


def gae(rewards: np.ndarray, values: np.ndarray, bootstrap: np.ndarray,
        dones: np.ndarray, gamma: float, lam: float):
    """GAE advantages and returns for one reward group.

    rewards/values/dones are (T, N) (or (T,) for a single env), bootstrap is
    the next-state value per env, masked out after terminal steps.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    single = rewards.ndim == 1
    if single:
        rewards = rewards[:, None]
        values = np.asarray(values, dtype=np.float64)[:, None]
        dones = np.asarray(dones, dtype=np.float64)[:, None]
        bootstrap = np.atleast_1d(np.asarray(bootstrap, dtype=np.float64))
    else:
        values = np.asarray(values, dtype=np.float64)
        dones = np.asarray(dones, dtype=np.float64)
        bootstrap = np.asarray(bootstrap, dtype=np.float64)
    adv = np.zeros_like(rewards)
    gae_kernel(rewards, values, bootstrap, dones, float(gamma), float(lam), adv)
    returns = adv + values
    if single:
        return adv[:, 0], returns[:, 0]
    return adv, returns


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Standardize over every element; constant input maps to zeros."""
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("need at least two advantage samples to normalize")
    return (adv - adv.mean()) / (adv.std() + ADV_EPS)


def total_advantage(group_advantages) -> np.ndarray:
    """Sum of per-group normalized advantages; shapes must agree."""
    group_advantages = list(group_advantages)
    if not group_advantages:
        raise ValueError("no advantage groups given")
    shape = group_advantages[0].shape
    for g in group_advantages[1:]:
        if g.shape != shape:
            raise ValueError("advantage groups have mismatched shapes")
    return np.sum(group_advantages, axis=0)


def ppo_loss(log_probs_new: np.ndarray, log_probs_old: np.ndarray,
             total_adv: np.ndarray, clip_epsilon: float) -> float:
    """Negated clipped-surrogate mean (minimization form)."""
    ratio = np.exp(log_probs_new - log_probs_old)
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    return float(-np.mean(np.minimum(ratio * total_adv, clipped * total_adv)))


def surrogate_terms(log_probs_new, log_probs_old, total_adv, clip_epsilon):
    """(loss, dloss/dlogp_new) of the clipped surrogate.

    The per-sample gradient is exactly zero wherever the clip branch is
    active, i.e. when the ratio sits outside [1-eps, 1+eps] on the side the
    advantage is pushing toward.
    """
    ratio = np.exp(log_probs_new - log_probs_old)
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    t_unclipped = ratio * total_adv
    t_clipped = clipped * total_adv
    take_unclipped = t_unclipped <= t_clipped
    loss = float(-np.mean(np.where(take_unclipped, t_unclipped, t_clipped)))
    grad = np.where(take_unclipped, ratio * total_adv, 0.0)
    grad = -grad / log_probs_new.shape[0]
    return loss, grad


class MultiCriticAgent:
    """Actor plus critic bank (three critics, or one in single-critic mode)."""

    def __init__(self, obs_dim: int, action_dim: int, cfg: PpoConfig,
                 num_critics: int, rng: np.random.Generator):
        from .neural import Adam, CriticBank

        self.cfg = cfg
        self.num_critics = num_critics
        self.actor = GaussianPolicy(obs_dim, action_dim, cfg.hidden,
                                    cfg.activation, rng, cfg.log_std_init,
                                    cfg.log_std_bounds)
        self.critic_bank = CriticBank(num_critics, [obs_dim] + list(cfg.hidden) + [1],
                                      cfg.activation, rng)
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.learning_rate)
        self.critic_opt = Adam(self.critic_bank.parameters(), lr=cfg.learning_rate)

    @property
    def critics(self) -> list:
        return self.critic_bank.nets

    def values(self, obs: np.ndarray) -> np.ndarray:
        """(batch, num_critics) value predictions."""
        return self.critic_bank.forward(obs)

    def update(self, buffer: RolloutBuffer, bootstrap: np.ndarray,
               shuffle_rng: np.random.Generator) -> dict:
        """Run the PPO epochs over a full buffer; returns training statistics."""
        cfg = self.cfg
        if not buffer.full:
            raise RuntimeError("buffer must be full before an update")
        t_steps, n_envs = buffer.steps, buffer.num_envs
        batch = t_steps * n_envs
        obs = buffer.obs.reshape(batch, -1)
        actions = buffer.actions.reshape(batch, -1)
        logp_old = buffer.log_probs.reshape(batch)

        advantages = np.zeros((t_steps, n_envs, self.num_critics))
        returns = np.zeros_like(advantages)
        for g in range(self.num_critics):
            adv_g, ret_g = gae(buffer.rewards[:, :, g], buffer.values[:, :, g],
                               bootstrap[:, g], buffer.dones, cfg.gamma,
                               cfg.gae_lambda)
            advantages[:, :, g] = adv_g
            returns[:, :, g] = ret_g
        flat_adv = advantages.reshape(batch, self.num_critics)
        flat_ret = returns.reshape(batch, self.num_critics)
        if cfg.adv_norm_scope == "batch":
            total_adv = total_advantage(
                [normalize_advantages(flat_adv[:, g]) for g in range(self.num_critics)])
        else:
            total_adv = None  # normalized per minibatch below

        stats = {"surrogate_loss": 0.0, "entropy": 0.0,
                 "value_loss": np.zeros(self.num_critics)}
        n_updates = 0
        mb_size = batch // cfg.minibatches
        for _ in range(cfg.epochs):
            perm = shuffle_rng.permutation(batch)
            for mb in range(cfg.minibatches):
                idx = perm[mb * mb_size:(mb + 1) * mb_size]
                if cfg.adv_norm_scope == "batch":
                    adv_mb = total_adv[idx]
                else:
                    adv_mb = total_advantage(
                        [normalize_advantages(flat_adv[idx, g])
                         for g in range(self.num_critics)])
                sur, ent = self._actor_step(obs[idx], actions[idx],
                                            logp_old[idx], adv_mb)
                stats["surrogate_loss"] += sur
                stats["entropy"] += ent
                stats["value_loss"] += self._critic_step(obs[idx], flat_ret[idx])
                n_updates += 1
        stats["surrogate_loss"] /= n_updates
        stats["entropy"] /= n_updates
        stats["value_loss"] /= n_updates
        return stats

    def _actor_step(self, obs, actions, logp_old, adv) -> tuple:
        cfg = self.cfg
        actor = self.actor
        mean, cache = actor.mean_net.forward_cached(obs)
        std = np.exp(actor.log_std)
        z = (actions - mean) / std
        logp_new = -0.5 * (z * z).sum(axis=1) - actor.log_std.sum() \
            - 0.5 * actor.action_size * np.log(2.0 * np.pi)
        loss, dlogp = surrogate_terms(logp_new, logp_old, adv, cfg.clip_epsilon)
        entropy = actor.entropy()
        if not np.isfinite(loss):
            raise NumericError(f"surrogate loss is {loss}")
        # d logp / d mean = z / std ; d logp / d log_std_j = z_j^2 - 1
        dmean = dlogp[:, None] * (z / std)
        dlog_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
        dlog_std -= cfg.entropy_coef  # entropy bonus: dH/dlog_std = 1
        grads, _ = actor.mean_net.backward(cache, dmean)
        if not all(np.isfinite(g).all() for g in grads):
            raise NumericError("non-finite actor gradient")
        self.actor_opt.step(grads + [dlog_std])
        actor.clamp_log_std()
        return loss, entropy

    def _critic_step(self, obs, targets) -> np.ndarray:
        """One regression step for every critic; returns per-critic losses."""
        v, cache = self.critic_bank.forward_cached(obs)
        err = v - targets
        losses = np.mean(err * err, axis=0)
        if not np.isfinite(losses).all():
            raise NumericError(f"value loss is {losses}")
        dv = self.cfg.value_loss_coef * 2.0 * err / err.shape[0]
        grads = self.critic_bank.backward(cache, dv)
        if not all(np.isfinite(g).all() for g in grads):
            raise NumericError("non-finite critic gradient")
        self.critic_opt.step(grads)
        return losses
