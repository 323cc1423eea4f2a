"""Proximal policy optimization: rollouts, advantage estimation, updates.

On-policy training loop over the converter environments.  Rollouts of a
fixed length are collected with stochastic actions (they may span episode
boundaries; the environment auto-resets), advantages come from generalized
advantage estimation with done masking, and each update runs several epochs
of clipped-surrogate minibatch ascent with Adam.  Advantages are normalized
per minibatch; the value function is unclipped.  Everything is seeded
through one numpy SeedSequence, so a (seed, config) pair reproduces
training bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from buckdgc.nets import (
    ActorCritic,
    Adam,
    CategoricalHead,
    clip_grad_norm,
    save_checkpoint,
)

__all__ = [
    "PpoConfig",
    "RolloutBuffer",
    "TrainRecord",
    "TrainingDiverged",
    "ActorCriticAdam",
    "collect_rollout",
    "compute_gae",
    "normalize_advantages",
    "ppo_update",
    "train",
    "write_train_log",
]


class TrainingDiverged(RuntimeError):
    """Raised when an update produced a non-finite loss."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ActorCriticAdam:
    """Paired Adam optimizers: actor (with log_std) and critic step with
    separate gradient-norm budgets so the critic's large-return gradients
    cannot crowd out the policy update."""

    def __init__(self, ac: ActorCritic, lr: float):
        policy_params = ac.policy.parameters()
        if ac.variant == "pwm":
            policy_params = policy_params + [ac.head.log_std]
        self.policy = Adam(policy_params, lr=lr)
        self.value = Adam(ac.value.parameters(), lr=lr)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.999            # 0.99 for the pwm variant
    clip_range: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    rollout_steps: int = 2048
    total_steps: int = 1_000_000
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    entropy_coef_final: float = -1.0   # >= 0: anneal the coefficient linearly
    entropy_target: float = -1.0       # > 0: adapt the coefficient to hold this
    entropy_target_frac: float = 0.6   # ... target, annealed to 0 by this point
    max_grad_norm: float = 0.5
    target_kl: float = -1.0            # > 0: stop an update's epochs early
    checkpoint_every: int = 0       # updates between checkpoints; 0 = final only

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError("clip_range must be in (0, 1)")
        if self.rollout_steps % self.minibatch_size != 0:
            raise ValueError("rollout_steps must be divisible by minibatch_size")
        if self.epochs < 1 or self.total_steps < 1:
            raise ValueError("epochs and total_steps must be positive")


@dataclass
class TrainRecord:
    """One row of the training log (one rollout/update cycle)."""

    update: int
    env_steps: int
    mean_ep_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    explained_variance: float
    grad_norm: float
    episodes: int

    FIELDS = (
        "update",
        "env_steps",
        "mean_ep_reward",
        "policy_loss",
        "value_loss",
        "entropy",
        "clip_fraction",
        "explained_variance",
        "grad_norm",
        "episodes",
    )

    def row(self):
        return [getattr(self, name) for name in self.FIELDS]


class RolloutBuffer:
    """Fixed-capacity on-policy storage with derived advantages/returns."""

    def __init__(self, capacity: int, obs_size: int, discrete: bool):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64 if discrete else np.float64)
        self.rewards = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.log_probs = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.advantages = np.zeros(capacity)
        self.returns = np.zeros(capacity)
        self.ptr = 0
        self.last_value = 0.0
        self.last_done = 0.0

    def add(self, obs, action, reward, value, log_prob, done):
        t = self.ptr
        self.obs[t] = obs
        self.actions[t] = action
        self.rewards[t] = reward
        self.values[t] = value
        self.log_probs[t] = log_prob
        self.dones[t] = done
        self.ptr = t + 1

    @property
    def full(self) -> bool:
        return self.ptr == self.capacity

    def reset(self):
        self.ptr = 0


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float, last_value: float):
    """Masked advantage recursion over the buffer, bootstrapped at the end.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    done_t marks that transition t finished its episode, so neither the
    value bootstrap nor the advantage recursion leaks across the boundary.
    The recursion truncates at the buffer end with `last_value`, the critic
    at the observation following the final transition.  Fills
    buffer.advantages and buffer.returns, returns both.
    """
    n = buffer.ptr
    adv = buffer.advantages
    rewards, values, dones = buffer.rewards, buffer.values, buffer.dones
    running = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        nonterm = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterm - values[t]
        running = delta + gamma * lam * nonterm * running
        adv[t] = running
        next_value = values[t]
    buffer.returns[:n] = adv[:n] + values[:n]
    return adv[:n], buffer.returns[:n]


def collect_rollout(env, ac: ActorCritic, buffer: RolloutBuffer, rng,
                    obs=None, episode_return=0.0):
    """Fill the buffer with stochastic on-policy transitions.

    Episodes auto-reset at termination so the buffer may span boundaries.
    Returns (next_obs, carried_episode_return, finished_episode_returns,
    last_value), the last being the bootstrap for the advantage recursion.
    """
    buffer.reset()
    if obs is None:
        obs = env.reset()
    finished = []
    while not buffer.full:
        action, log_prob, value = ac.act(obs, rng)
        # The stored action stays pre-clip (log-prob consistency); the pwm
        # environment clips to the actuator range itself.
        next_obs, reward, done, _ = env.step(action)
        buffer.add(obs, action, reward, value, log_prob, float(done))
        episode_return += reward
        if done:
            finished.append(episode_return)
            episode_return = 0.0
            next_obs = env.reset()
        obs = next_obs
    last_value = float(ac.value.forward(obs.reshape(1, -1))[0][0, 0])
    return obs, episode_return, finished, last_value


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Per-minibatch standardization (identity for singleton batches)."""
    if len(adv) <= 1:
        return adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(ac: ActorCritic, opt: ActorCriticAdam, buffer: RolloutBuffer,
               cfg: PpoConfig, rng) -> dict:
    """Clipped-surrogate epochs over shuffled minibatches; returns stats."""
    n = buffer.ptr
    clip = cfg.clip_range
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "clip_fraction": 0.0, "grad_norm": 0.0, "approx_kl": 0.0}
    batches = 0
    gaussian = ac.variant == "pwm"
    stop = False
    for _ in range(cfg.epochs):
        if stop:
            break
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            mb = len(idx)
            obs = buffer.obs[idx]
            actions = buffer.actions[idx]
            old_logp = buffer.log_probs[idx]
            adv = normalize_advantages(buffer.advantages[idx])
            rets = buffer.returns[idx]

            out, cache = ac.policy.forward(obs)
            if gaussian:
                logp, entropy = ac.head.logprob_entropy(out, actions)
            else:
                logp, entropy = CategoricalHead.logprob_entropy(out, actions)
            log_ratio = logp - old_logp
            ratio = np.exp(log_ratio)
            # Robust KL estimate; a blown budget stops the remaining epochs
            # so one update cannot drag the policy into hard saturation.
            approx_kl = float(((ratio - 1.0) - log_ratio).mean())
            if cfg.target_kl > 0.0 and approx_kl > 1.5 * cfg.target_kl:
                stop = True
                break
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
            policy_loss = -np.minimum(unclipped, clipped).mean()

            vals, vcache = ac.value.forward(obs)
            vals = vals[:, 0]
            verr = vals - rets
            value_loss = float((verr**2).mean())
            entropy_mean = float(entropy.mean())
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy_mean
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss (policy={policy_loss}, value={value_loss})",
                    record=stats,
                )

            # d(policy_loss)/d logp: the min() picks the unclipped branch on
            # ties, matching the usual subgradient convention.
            active = unclipped <= clipped
            d_logp = np.where(active, -adv * ratio, 0.0) / mb
            d_entropy = None
            if cfg.entropy_coef != 0.0:
                d_entropy = np.full(mb, -cfg.entropy_coef / mb)
            if gaussian:
                d_out, d_log_std = ac.head.backward(out, actions, d_logp, d_entropy)
            else:
                d_out = CategoricalHead.backward(out, actions, d_logp, d_entropy)
            policy_grads = ac.policy.backward(cache, d_out)
            d_vals = (cfg.value_coef * 2.0 / mb) * verr
            value_grads = ac.value.backward(vcache, d_vals[:, None])

            # Clip and step the two networks separately: returns are large,
            # so a shared norm budget would squeeze the policy gradient by
            # orders of magnitude whenever the value loss is big.
            if gaussian:
                policy_grads = policy_grads + [d_log_std]
            norm_p = clip_grad_norm(policy_grads, cfg.max_grad_norm)
            norm_v = clip_grad_norm(value_grads, cfg.max_grad_norm)
            opt.policy.update(policy_grads)
            opt.value.update(value_grads)
            norm = math.hypot(norm_p, norm_v)

            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += value_loss
            stats["entropy"] += entropy_mean
            stats["clip_fraction"] += float((np.abs(ratio - 1.0) > clip).mean())
            stats["grad_norm"] += norm
            stats["approx_kl"] += approx_kl
            batches += 1
    for key in stats:
        stats[key] /= max(batches, 1)
    return stats


def explained_variance(returns, values) -> float:
    var = float(np.var(returns))
    if var == 0.0:
        return 0.0
    return 1.0 - float(np.var(returns - values)) / var


def write_train_log(path, records):
    with open(path, "w") as fh:
        fh.write(",".join(TrainRecord.FIELDS) + "\n")
        for rec in records:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in rec.row()) + "\n")


def train(env_factory, cfg: PpoConfig, variant: str, seed: int,
          out_dir=None, config_hash="", verbose=False):
    """Alternate rollout collection and updates until total_steps is reached.

    env_factory(seed_sequence) must build a fresh environment.  Returns the
    trained ActorCritic and the list of TrainRecord rows; when out_dir is
    given, also writes checkpoints and the training log there.
    """
    root = np.random.SeedSequence(seed)
    env_ss, init_ss, sample_ss, shuffle_ss = root.spawn(4)
    env = env_factory(env_ss)
    ac = ActorCritic(
        variant,
        env.cfg.obs_size,
        rng=np.random.default_rng(init_ss),
        config_hash=config_hash,
    )
    opt = ActorCriticAdam(ac, lr=cfg.learning_rate)
    sample_rng = np.random.default_rng(sample_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    buffer = RolloutBuffer(cfg.rollout_steps, env.cfg.obs_size, discrete=env.discrete)

    if out_dir is not None:
        from pathlib import Path

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    n_updates = math.ceil(cfg.total_steps / cfg.rollout_steps)
    records = []
    obs = None
    carry = 0.0
    steps = 0
    alpha = cfg.entropy_coef
    prev_entropy = math.log(2.0)
    t_start = time.perf_counter()
    for update in range(1, n_updates + 1):
        obs, carry, finished, last_value = collect_rollout(
            env, ac, buffer, sample_rng, obs, carry
        )
        steps += buffer.ptr
        compute_gae(buffer, cfg.gamma, cfg.gae_lambda, last_value)
        ev = explained_variance(buffer.returns, buffer.values)
        update_cfg = cfg
        frac = (update - 1) / max(n_updates - 1, 1)
        if cfg.entropy_target > 0.0:
            # Feedback exploration control: hold policy entropy near an
            # annealed target by adapting the bonus coefficient.  The
            # categorical saturation trap (entropy gradient vanishing at
            # hard saturation) cannot bite because the coefficient grows
            # whenever entropy sags below target.
            target = cfg.entropy_target * max(0.0, 1.0 - frac / cfg.entropy_target_frac)
            if prev_entropy < target:
                alpha = min(alpha * 1.3, 1.0)
            else:
                alpha = max(alpha / 1.3, 1e-4)
            update_cfg = replace(cfg, entropy_coef=alpha)
        elif cfg.entropy_coef_final >= 0.0 and n_updates > 1:
            # Linear exploration schedule: wide early, sharp at the end so
            # the greedy evaluation policy matches the trained behavior.
            coef = cfg.entropy_coef + frac * (cfg.entropy_coef_final - cfg.entropy_coef)
            update_cfg = replace(cfg, entropy_coef=coef)
        stats = ppo_update(ac, opt, buffer, update_cfg, shuffle_rng)
        prev_entropy = stats["entropy"]
        rec = TrainRecord(
            update=update,
            env_steps=steps,
            mean_ep_reward=float(np.mean(finished)) if finished else math.nan,
            policy_loss=stats["policy_loss"],
            value_loss=stats["value_loss"],
            entropy=stats["entropy"],
            clip_fraction=stats["clip_fraction"],
            explained_variance=ev,
            grad_norm=stats["grad_norm"],
            episodes=len(finished),
        )
        records.append(rec)
        if verbose:
            print(
                f"update={rec.update} steps={rec.env_steps} "
                f"ep_reward={rec.mean_ep_reward:.2f} policy_loss={rec.policy_loss:.4f} "
                f"value_loss={rec.value_loss:.2f} entropy={rec.entropy:.3f} "
                f"clip_frac={rec.clip_fraction:.3f} ev={rec.explained_variance:.3f} "
                f"elapsed={time.perf_counter() - t_start:.0f}s",
                flush=True,
            )
        if out_dir is not None and cfg.checkpoint_every > 0 and update % cfg.checkpoint_every == 0:
            save_checkpoint(ac, out_dir / f"checkpoint_u{update:05d}.txt",
                            extra={"train_steps": steps})
    if out_dir is not None:
        save_checkpoint(ac, out_dir / "checkpoint_final.txt", extra={"train_steps": steps})
        write_train_log(out_dir / "trainlog.csv", records)
    return ac, records
