"""PPO training loop: synchronous collection, GAE, observation
normalization, and minibatched clipped-surrogate updates.

The same collect/update path drives the step-based environment and the
black-box wrapper; the wrapper's one-step episodes just make GAE degenerate
to advantage = return - value.  All stochasticity flows through counter
streams, so a (seed, config) pair pins the whole run.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .mathcore import RngStream
from .policy import MLP, AdamState, adam_update, sample_and_logprob

log = logging.getLogger("boxpush")

# stream-id domains: environments own [0, n_envs); everything else lives
# far above so ids never collide
NOISE_STREAM_BASE = 1 << 32
ACTOR_INIT_STREAM = 1 << 33
CRITIC_INIT_STREAM = (1 << 33) + 1
SHUFFLE_STREAM = (1 << 33) + 2


@dataclass
class PPOConfig:
    gamma: float = 0.98
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 1e-4
    entropy_coef: float = 0.0
    epochs_actor: int = 10
    epochs_critic: int = 5
    minibatches: int = 4
    steps_per_iter: int = 24
    normalize_obs: bool = True
    hidden: tuple = (256, 128, 64)
    init_std: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip must be positive")

    @classmethod
    def for_mode(cls, mode, **overrides):
        """Trainer defaults per mode (step vs black-box)."""
        if mode == "step":
            base = dict(epochs_actor=10, epochs_critic=5, minibatches=4,
                        steps_per_iter=24, normalize_obs=True)
        elif mode == "bb":
            base = dict(epochs_actor=100, epochs_critic=100, minibatches=1,
                        steps_per_iter=1, normalize_obs=False)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        base.update(overrides)
        return cls(**base)


@dataclass
class RunningNormalizer:
    """Welford accumulators; normalize() never mutates, update() is explicit."""

    count: float
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, dim):
        return cls(0.0, np.zeros(dim), np.zeros(dim))

    def variance(self):
        return self.m2 / self.count if self.count > 0 else np.zeros_like(self.m2)

    def normalize(self, x):
        if self.count == 0:
            return np.clip(x, -10.0, 10.0)
        return np.clip((x - self.mean) / np.sqrt(self.variance() + 1e-8), -10.0, 10.0)

    def update(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        n = float(batch.shape[0])
        if n == 0:
            return self
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta * delta * (self.count * n / total)
        self.count = total
        return self


def normalizer_update(norm: RunningNormalizer, obs) -> RunningNormalizer:
    """Fold an observation batch into the running statistics."""
    return norm.update(obs)


@dataclass
class RolloutBuffer:
    """One iteration of transitions, shaped (steps_per_iter, n_envs, ...).

    obs holds the raw observations; obs_used what the policy actually saw
    (normalized when normalization is on), which keeps stored log-probs
    consistent during the update epochs.
    """

    obs: np.ndarray
    obs_used: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap: np.ndarray
    advantages: np.ndarray = None
    returns: np.ndarray = None

    @classmethod
    def allocate(cls, steps, n_envs, obs_dim, act_dim):
        return cls(
            obs=np.empty((steps, n_envs, obs_dim)),
            obs_used=np.empty((steps, n_envs, obs_dim)),
            actions=np.empty((steps, n_envs, act_dim)),
            logp=np.empty((steps, n_envs)),
            values=np.empty((steps, n_envs)),
            rewards=np.empty((steps, n_envs)),
            dones=np.empty((steps, n_envs)),
            bootstrap=np.empty(n_envs),
        )


def collect(env, actor: MLP, log_std, critic: MLP, cfg: PPOConfig,
            normalizer: RunningNormalizer, action_stream: RngStream):
    """Run steps_per_iter synchronous batched steps.

    Works unchanged for the step-based environment and the black-box
    wrapper (same observe/step surface).  Returns the filled buffer plus
    the episode returns/success flags completed during collection.
    """
    n_envs = env.n_envs
    obs = env.observe()
    if obs.shape[1] != actor.sizes[0]:
        raise ValueError("policy input width does not match the observation size")
    buf = RolloutBuffer.allocate(cfg.steps_per_iter, n_envs, obs.shape[1], actor.sizes[-1])
    ep_returns, ep_success = [], []
    for t in range(cfg.steps_per_iter):
        if cfg.normalize_obs:
            normalizer.update(obs)
            used = normalizer.normalize(obs)
        else:
            used = obs
        mean = actor.forward(used)
        action, logp = sample_and_logprob(mean, log_std, action_stream)
        value = critic.forward(used)[:, 0]
        buf.obs[t] = obs
        buf.obs_used[t] = used
        buf.actions[t] = action
        buf.logp[t] = logp
        buf.values[t] = value
        obs, reward, done, info = env.step(action)
        buf.rewards[t] = reward
        buf.dones[t] = done
        if np.any(done):
            ep_returns.append(info["episode_return"][done])
            ep_success.append(info["episode_success"][done])
    used = normalizer.normalize(obs) if cfg.normalize_obs else obs
    buf.bootstrap = critic.forward(used)[:, 0]
    ep_returns = np.concatenate(ep_returns) if ep_returns else np.empty(0)
    ep_success = np.concatenate(ep_success) if ep_success else np.empty(0, dtype=bool)
    return buf, ep_returns, ep_success


def gae(buf: RolloutBuffer, gamma, lam):
    """Generalized advantage estimation over the buffer, plus returns.

    delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
    A_t     = delta_t + gamma lam (1 - done_t) A_{t+1}
    """
    steps, n_envs = buf.rewards.shape
    adv = np.empty((steps, n_envs))
    carry = np.zeros(n_envs)
    next_value = buf.bootstrap
    for t in range(steps - 1, -1, -1):
        nonterminal = 1.0 - buf.dones[t]
        delta = buf.rewards[t] + gamma * next_value * nonterminal - buf.values[t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[t] = carry
        next_value = buf.values[t]
    buf.advantages = adv
    buf.returns = adv + buf.values
    return adv, buf.returns


def ppo_update(actor: MLP, log_std, critic: MLP, buf: RolloutBuffer, cfg: PPOConfig,
               adam_actor: AdamState, adam_critic: AdamState, shuffle_stream: RngStream):
    """Clipped-surrogate actor and squared-error critic epochs.

    Actor and critic honor their own epoch counts: joint epochs first, then
    whichever has more continues alone.  Raises on non-finite losses.
    """
    steps, n_envs = buf.rewards.shape
    batch = steps * n_envs
    if batch % cfg.minibatches != 0:
        raise ValueError("minibatches must divide steps_per_iter * n_envs")
    mb = batch // cfg.minibatches

    obs = buf.obs_used.reshape(batch, -1)
    actions = buf.actions.reshape(batch, -1)
    logp_old = buf.logp.reshape(batch)
    returns = buf.returns.reshape(batch)
    adv = buf.advantages.reshape(batch)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    act_dim = actions.shape[1]
    stats = {"actor_loss": 0.0, "critic_loss": 0.0, "clip_fraction": 0.0}
    for epoch in range(max(cfg.epochs_actor, cfg.epochs_critic)):
        keys = shuffle_stream.uniform_block(batch).reshape(batch)
        perm = np.argsort(keys, kind="stable")
        for k in range(cfg.minibatches):
            idx = perm[k * mb:(k + 1) * mb]
            if epoch < cfg.epochs_actor:
                cache = []
                mean = actor.forward(obs[idx], cache)
                sigma = np.exp(log_std)
                z = (actions[idx] - mean) / sigma
                logp_new = (-0.5 * np.sum(z * z, axis=-1) - np.sum(log_std)
                            - 0.5 * act_dim * np.log(2.0 * np.pi))
                ratio = np.exp(logp_new - logp_old[idx])
                a = adv[idx]
                surr1 = ratio * a
                surr2 = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a
                actor_loss = -np.mean(np.minimum(surr1, surr2))
                if not np.isfinite(actor_loss):
                    raise RuntimeError("non-finite actor loss; aborting iteration")
                # d(-min)/dlogp: only samples on the unclipped branch carry gradient
                live = (surr1 <= surr2).astype(np.float64)
                g_logp = -(a * ratio * live) / mb
                g_mean = g_logp[:, None] * (z / sigma)
                g_log_std = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0)
                if cfg.entropy_coef > 0.0:
                    g_log_std -= cfg.entropy_coef  # dH/dlog_std = 1 per dim
                grads, _ = actor.backward(cache, g_mean)
                adam_update(actor.params() + [log_std], grads + [g_log_std],
                            adam_actor, cfg.lr)
                stats["actor_loss"] = float(actor_loss)
                stats["clip_fraction"] = float(np.mean(live < 0.5))
            if epoch < cfg.epochs_critic:
                cache = []
                v = critic.forward(obs[idx], cache)[:, 0]
                err = v - returns[idx]
                critic_loss = float(np.mean(err * err))
                if not np.isfinite(critic_loss):
                    raise RuntimeError("non-finite critic loss; aborting iteration")
                grads, _ = critic.backward(cache, (2.0 / mb) * err[:, None])
                adam_update(critic.params(), grads, adam_critic, cfg.lr)
                stats["critic_loss"] = critic_loss
    return stats


def train(run_cfg):
    """Full training loop; returns the metrics rows it also writes to CSV.

    run_cfg is a harness.RunConfig; the mode switch (step vs bb) only
    changes which environment wrapper is built and the trainer defaults.
    """
    from . import harness  # deferred: harness owns config + environment assembly

    env = harness.build_training_env(run_cfg)
    try:
        return _train_loop(run_cfg, env)
    finally:
        harness.close_env(env)


def _train_loop(run_cfg, env):
    from . import harness

    cfg = run_cfg.ppo
    n_envs = env.n_envs
    obs_dim = env.observe().shape[1]
    act_dim = env.action_dim

    actor = MLP.init([obs_dim, *cfg.hidden, act_dim],
                     RngStream(run_cfg.seed, stream_id=ACTOR_INIT_STREAM))
    log_std = np.full(act_dim, np.log(cfg.init_std))
    critic = MLP.init([obs_dim, *cfg.hidden, 1],
                      RngStream(run_cfg.seed, stream_id=CRITIC_INIT_STREAM))
    adam_actor = AdamState.zeros_like(actor.params() + [log_std])
    adam_critic = AdamState.zeros_like(critic.params())
    normalizer = RunningNormalizer.zeros(obs_dim)
    action_stream = RngStream(run_cfg.seed,
                              stream_id=NOISE_STREAM_BASE + np.arange(n_envs))
    shuffle_stream = RngStream(run_cfg.seed, stream_id=SHUFFLE_STREAM)

    interactions_per_iter = cfg.steps_per_iter * n_envs * env.interactions_per_step
    rows = []
    mean_return = 0.0
    success_rate = 0.0
    out_csv = harness.metrics_path(run_cfg)
    t_start = time.perf_counter()
    for it in range(1, run_cfg.max_iterations + 1):
        t_iter = time.perf_counter()
        buf, ep_ret, ep_suc = collect(env, actor, log_std, critic, cfg,
                                      normalizer, action_stream)
        gae(buf, cfg.gamma, cfg.lam)
        ppo_update(actor, log_std, critic, buf, cfg, adam_actor, adam_critic,
                   shuffle_stream)
        if ep_ret.size:
            mean_return = float(ep_ret.mean())
            success_rate = float(ep_suc.mean())
        elapsed = time.perf_counter() - t_start
        fps = interactions_per_iter / max(time.perf_counter() - t_iter, 1e-9)
        rows.append(harness.MetricsRow(
            iteration=it,
            env_interactions=it * interactions_per_iter,
            wall_seconds=elapsed,
            fps=fps,
            mean_return=mean_return,
            success_rate=success_rate,
        ))
        harness.write_metrics_csv(out_csv, rows)
        log.info("iter %4d  interactions %10d  return %9.2f  success %.3f  fps %8.0f",
                 it, rows[-1].env_interactions, mean_return, success_rate, fps)
        if run_cfg.checkpoint_every and it % run_cfg.checkpoint_every == 0:
            harness.save_policy(run_cfg, it, actor, log_std, critic, normalizer)
        if run_cfg.wall_clock_budget_s and elapsed > run_cfg.wall_clock_budget_s:
            break
    harness.save_policy(run_cfg, None, actor, log_std, critic, normalizer)
    return rows
