"""Black-box wrapper: one step = a whole episode driven by basis weights.

The wrapper exposes the same observe/step/reset surface as the step-based
environment, so the training loop runs either one unchanged.  Observations
shrink to a masked context; actions become ProMP weight matrices whose
generated trajectory is injected as absolute joint targets, and the step
reward is the exact sum of the episode's per-step rewards.
"""

from __future__ import annotations

import csv

import numpy as np

from .env import BoxPushingEnv, ConfigError, OBS_DIM, OBS_SLICES
from .kinematics import N_JOINTS
from .promp import ProMPConfig, basis_matrix, _generate

DEFAULT_CONTEXT_GROUPS = ("object_pose", "target_pose")


def context_mask(groups=DEFAULT_CONTEXT_GROUPS) -> np.ndarray:
    """(35,) boolean mask selecting whole observation groups by name."""
    mask = np.zeros(OBS_DIM, dtype=bool)
    for name in groups:
        if name not in OBS_SLICES:
            raise ConfigError(f"unknown observation group {name!r}; "
                              f"choose from {sorted(OBS_SLICES)}")
        mask[OBS_SLICES[name]] = True
    return mask


def context(obs, mask):
    """Masked, compacted context vector(s): the entries where mask is true."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (OBS_DIM,):
        raise ConfigError(f"context mask must have {OBS_DIM} entries")
    if not mask.any():
        raise ConfigError("context mask must select at least one entry")
    return np.asarray(obs)[..., mask]


class BlackBoxEnv:
    """Episode-level view of a batched step environment.

    One step consumes exactly horizon step-based interactions per
    environment, which is what the interactions_per_step accounting
    reports to the trainer.
    """

    def __init__(self, env: BoxPushingEnv, promp_cfg: ProMPConfig = None, mask=None):
        self.env = env
        self.promp_cfg = promp_cfg or ProMPConfig(horizon=env.cfg.horizon)
        if self.promp_cfg.horizon != env.cfg.horizon:
            raise ConfigError("trajectory generator horizon must match the episode length")
        self.mask = context_mask() if mask is None else np.asarray(mask, dtype=bool)
        context(np.zeros(OBS_DIM), self.mask)  # validates the mask
        basis = basis_matrix(self.promp_cfg)
        self._shifted_basis = basis - basis[0:1]  # cached, read-only

    @property
    def n_envs(self):
        return self.env.n_envs

    @property
    def action_dim(self):
        return N_JOINTS * self.promp_cfg.n_basis

    @property
    def interactions_per_step(self):
        return self.env.cfg.horizon

    @property
    def context_dim(self):
        return int(self.mask.sum())

    def observe(self):
        return context(self.env.observe(), self.mask)

    def reset(self, env_ids=None):
        return context(self.env.reset(env_ids), self.mask)

    def close(self):
        self.env.close()

    def _trajectories(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim == 2:
            w = w.reshape(self.n_envs, N_JOINTS, self.promp_cfg.n_basis)
        if w.shape != (self.n_envs, N_JOINTS, self.promp_cfg.n_basis):
            raise ValueError("weights must be (n_envs, 7, n_basis) or flattened")
        return _generate(self._shifted_basis, self.promp_cfg.weight_scale, w, self.env.q)

    def step(self, w):
        """Execute the trajectory generated from w over one full episode.

        Requires every environment to be freshly reset.  Returns the
        post-reset context, the exact per-step reward sum, an all-true done
        vector, and info carrying the episode success flags.
        """
        if np.any(self.env.step_count != 0):
            raise RuntimeError("black-box step requires freshly reset environments")
        traj = self._trajectories(w)
        total = np.zeros(self.n_envs)
        info = {}
        obs = None
        for t in range(self.env.cfg.horizon):
            obs, reward, done, info = self.env.step_targets(traj[:, t])
            total += reward
        return (
            context(obs, self.mask),
            info["episode_return"],
            np.ones(self.n_envs, dtype=bool),
            {
                "success": info["episode_success"],
                "episode_return": info["episode_return"],
                "episode_success": info["episode_success"],
                "stepwise_return": total,
            },
        )

    def record_trajectories(self, w, csv_path=None):
        """Roll out w recording (reference, actual) joint positions, (n, T, 7).

        reference is the generated trajectory, actual the joint positions
        measured after each step.  Optionally appends rows to a CSV with
        columns env_id, t, joint, reference, actual.
        """
        if np.any(self.env.step_count != 0):
            raise RuntimeError("trajectory recording requires freshly reset environments")
        reference = self._trajectories(w)
        actual = np.empty_like(reference)
        for t in range(self.env.cfg.horizon):
            self.env.step_targets(reference[:, t])
            actual[:, t] = self.env.q
        if csv_path is not None:
            with open(csv_path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["env_id", "t", "joint", "reference", "actual"])
                for i in range(self.n_envs):
                    for t in range(self.env.cfg.horizon):
                        for j in range(N_JOINTS):
                            writer.writerow([i, t, j, reference[i, t, j], actual[i, t, j]])
        return reference, actual
