"""Batched step-based box-pushing environment.

N environments advance in lockstep on flat numpy arrays.  Stepping can
partition the batch across worker threads; every per-environment quantity
is computed elementwise and every random draw comes from that environment's
own counter stream, so results are bit-identical for any worker count and
for a batched run versus independent single-environment runs.

Episodes terminate on timeout only (success never truncates), and
terminated environments auto-reset with a freshly sampled target; the
pre-reset observation and episode statistics are exposed through info.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    ArmModel,
    JointState,
    N_JOINTS,
    forward_kinematics,
    integrate,
    limit_excess,
    pd_torque,
    rod_down_error,
)
from .mathcore import RngStream, TWO_PI, yaw_error
from .pushworld import BoxPose, CavityModel, planar_distance, resolve_contact, tip_in_box_frame

OBS_DIM = 35
OBS_SLICES = {
    "joint_pos": slice(0, 7),
    "joint_vel": slice(7, 14),
    "object_pose": slice(14, 21),
    "target_pose": slice(21, 28),
    "last_action": slice(28, 35),
}

# frozen by scripts/find_home_config.py: rod tip at the cavity center,
# pointing straight down
DEFAULT_Q0 = (0.0, 0.359387, 0.0, -2.673609, 0.0, 3.032996, 0.785398)


class ConfigError(ValueError):
    """Invalid configuration detected before any stepping happens."""


@dataclass
class RewardWeights:
    rod: float = 1.0
    rod_rot: float = 1.0
    energy: float = 5e-4
    limits: float = 1.0
    rot: float = 2.0
    goal: float = 3.5


@dataclass
class RewardTerms:
    """The six dense-reward components, each non-negative, before weighting."""

    goal: np.ndarray
    rot: np.ndarray
    energy: np.ndarray
    limits: np.ndarray
    rod: np.ndarray
    rod_rot: np.ndarray


@dataclass
class Command:
    target: BoxPose


@dataclass
class EnvConfig:
    n_envs: int = 4096
    dt: float = 0.02
    horizon: int = 100
    substeps: int = 4
    q0: tuple = DEFAULT_Q0
    box0: tuple = (0.4, 0.0, 0.0)
    target_x: tuple = (0.3, 0.6)
    target_y: tuple = (-0.45, 0.45)
    target_yaw: tuple = (0.0, TWO_PI)
    weights: RewardWeights = field(default_factory=RewardWeights)
    success_pos: float = 0.05
    success_yaw: float = 0.5
    box_z: float = 0.05
    rod_ref_height: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.n_envs < 1:
            raise ConfigError("n_envs must be >= 1")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if abs(self.horizon * self.dt - 2.0) > 1e-9:
            raise ConfigError("episode length horizon*dt must equal 2.0 s")
        for name in ("target_x", "target_y", "target_yaw"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} range must be ordered")
        if len(self.q0) != N_JOINTS:
            raise ConfigError("q0 must have 7 entries")
        if self.success_pos <= 0 or self.success_yaw <= 0:
            raise ConfigError("success thresholds must be positive")


def sample_target(rng: RngStream, cfg: EnvConfig, idx=None) -> Command:
    """Uniform target pose per stream element; advances three counters each."""
    x = rng.uniform(cfg.target_x[0], cfg.target_x[1], idx=idx)
    y = rng.uniform(cfg.target_y[0], cfg.target_y[1], idx=idx)
    yaw = rng.uniform(cfg.target_yaw[0], cfg.target_yaw[1], idx=idx)
    return Command(BoxPose(x, y, yaw))


def reward_terms(model: ArmModel, s_raw: JointState, tau, tip, box: BoxPose,
                 cmd: Command, rod_ref_height=0.025) -> RewardTerms:
    """Dense reward components for one step.

    s_raw must be the pre-clamp integrator output so the limit term sees
    the violation the clamping removed.
    """
    tau = np.asarray(tau, dtype=np.float64)
    dx = tip.position[..., 0] - box.x
    dy = tip.position[..., 1] - box.y
    dz = tip.position[..., 2] - rod_ref_height
    return RewardTerms(
        goal=planar_distance(box, cmd.target),
        rot=yaw_error(box.yaw, cmd.target.yaw),
        energy=np.sum(tau * tau, axis=-1),
        limits=limit_excess(model, s_raw),
        rod=np.sqrt(dx * dx + dy * dy + dz * dz),
        rod_rot=rod_down_error(tip),
    )


def total_reward(terms: RewardTerms, weights: RewardWeights):
    """Weighted sum; every term enters with a negative sign, so R <= 0."""
    return -(
        weights.rod * terms.rod
        + weights.rod_rot * terms.rod_rot
        + weights.energy * terms.energy
        + weights.limits * terms.limits
        + weights.rot * terms.rot
        + weights.goal * terms.goal
    )


def is_success(box: BoxPose, cmd: Command, pos_threshold=0.05, yaw_threshold=0.5):
    """Final-pose criterion: position and yaw both within their thresholds."""
    return (planar_distance(box, cmd.target) <= pos_threshold) & (
        yaw_error(box.yaw, cmd.target.yaw) <= yaw_threshold
    )


class BoxPushingEnv:
    """Vectorized environment over cfg.n_envs copies of the pushing task.

    stream_offset shifts the per-environment stream ids, which lets a
    single-environment instance reproduce environment i of a batched run
    exactly: BoxPushingEnv(cfg_1env, ..., stream_offset=i).  Multi-worker
    stepping lives in parallel.ParallelEnv, which shards a batch across
    processes built from this class.
    """

    def __init__(self, cfg: EnvConfig, arm: ArmModel, cavity: CavityModel,
                 stream_offset: int = 0):
        self.cfg = cfg
        self.arm = arm
        self.cavity = cavity
        n = cfg.n_envs

        self._q0 = np.asarray(cfg.q0, dtype=np.float64)
        self._box0 = np.asarray(cfg.box0, dtype=np.float64)
        self._validate_home()

        self.q = np.tile(self._q0, (n, 1))
        self.qd = np.zeros((n, N_JOINTS))
        self.box_x = np.full(n, self._box0[0])
        self.box_y = np.full(n, self._box0[1])
        self.box_yaw = np.full(n, self._box0[2])
        self.tgt_x = np.zeros(n)
        self.tgt_y = np.zeros(n)
        self.tgt_yaw = np.zeros(n)
        self.last_action = np.zeros((n, N_JOINTS))
        self.step_count = np.zeros(n, dtype=np.int64)
        self.ep_return = np.zeros(n)
        self.rng = RngStream(cfg.seed, stream_id=stream_offset + np.arange(n))

        self._q_range = self.arm.q_hi - self.arm.q_lo
        self.reset()

    def close(self):
        pass

    @property
    def n_envs(self):
        return self.cfg.n_envs

    @property
    def action_dim(self):
        return N_JOINTS

    @property
    def interactions_per_step(self):
        """Environment interactions consumed by one step() call, per env."""
        return 1

    def _validate_home(self):
        tip = forward_kinematics(self.arm, self._q0)
        box0 = BoxPose(self._box0[0], self._box0[1], self._box0[2])
        p = tip_in_box_frame(box0, tip.position[..., :2])
        if np.any(np.abs(p) > self.cavity.half_width):
            raise ConfigError(
                "initial configuration places the rod tip outside the box cavity "
                f"(box-frame offset {p})"
            )
        if tip.position[..., 2] >= self.cavity.insert_height:
            raise ConfigError("initial configuration leaves the rod above the insert height")

    # -- reset / observe ---------------------------------------------------

    def reset(self, env_ids=None):
        ids = np.arange(self.cfg.n_envs) if env_ids is None else np.asarray(env_ids)
        self._reset_ids(ids)
        return self.observe()

    def _reset_ids(self, ids):
        self.q[ids] = self._q0
        self.qd[ids] = 0.0
        self.box_x[ids] = self._box0[0]
        self.box_y[ids] = self._box0[1]
        self.box_yaw[ids] = self._box0[2]
        self.last_action[ids] = 0.0
        self.step_count[ids] = 0
        self.ep_return[ids] = 0.0
        cmd = sample_target(self.rng, self.cfg, idx=ids)
        self.tgt_x[ids] = cmd.target.x
        self.tgt_y[ids] = cmd.target.y
        self.tgt_yaw[ids] = cmd.target.yaw

    def observe(self) -> np.ndarray:
        """(n_envs, 35) observation: q, qd, box pose, target pose, last action."""
        n = self.cfg.n_envs
        obs = np.empty((n, OBS_DIM))
        obs[:, 0:7] = self.q
        obs[:, 7:14] = self.qd
        obs[:, 14] = self.box_x
        obs[:, 15] = self.box_y
        obs[:, 16] = self.cfg.box_z
        obs[:, 17] = np.cos(0.5 * self.box_yaw)  # quat_from_yaw, written in place
        obs[:, 18:20] = 0.0
        obs[:, 20] = np.sin(0.5 * self.box_yaw)
        obs[:, 21] = self.tgt_x
        obs[:, 22] = self.tgt_y
        obs[:, 23] = self.cfg.box_z
        obs[:, 24] = np.cos(0.5 * self.tgt_yaw)
        obs[:, 25:27] = 0.0
        obs[:, 27] = np.sin(0.5 * self.tgt_yaw)
        obs[:, 28:35] = self.last_action
        return obs

    def command(self) -> Command:
        return Command(BoxPose(self.tgt_x.copy(), self.tgt_y.copy(), self.tgt_yaw.copy()))

    def box_pose(self) -> BoxPose:
        return BoxPose(self.box_x.copy(), self.box_y.copy(), self.box_yaw.copy())

    # -- stepping ----------------------------------------------------------

    def step(self, actions):
        """Step with normalized actions in [-1, 1] mapped to joint targets."""
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.cfg.n_envs, N_JOINTS):
            raise ValueError(f"actions must have shape {(self.cfg.n_envs, N_JOINTS)}")
        if not np.all(np.isfinite(actions)):
            raise ValueError("actions must be finite")
        a = np.clip(actions, -1.0, 1.0)
        q_des = self.arm.q_lo + (a + 1.0) * 0.5 * self._q_range
        return self._advance(q_des, a)

    def step_targets(self, q_des):
        """Step with absolute joint targets, bypassing the [-1, 1] action map.

        Targets are clamped to the joint limits; last_action records their
        normalized equivalent so observations stay on one scale.
        """
        q_des = np.asarray(q_des, dtype=np.float64)
        if q_des.shape != (self.cfg.n_envs, N_JOINTS):
            raise ValueError(f"targets must have shape {(self.cfg.n_envs, N_JOINTS)}")
        if not np.all(np.isfinite(q_des)):
            raise ValueError("targets must be finite")
        q_des = np.clip(q_des, self.arm.q_lo, self.arm.q_hi)
        a = 2.0 * (q_des - self.arm.q_lo) / self._q_range - 1.0
        return self._advance(q_des, a)

    def _advance(self, q_des, a_norm):
        n = self.cfg.n_envs
        reward = np.empty(n)
        success = np.empty(n, dtype=bool)
        self._step_slice(0, n, q_des, a_norm, reward, success)
        self.step_count += 1
        done = self.step_count >= self.cfg.horizon
        info = {"success": success}
        if np.any(done):
            info["final_observation"] = self.observe()
            info["episode_return"] = self.ep_return.copy()
            info["episode_success"] = success.copy()
            self._reset_ids(np.nonzero(done)[0])
        return self.observe(), reward, done, info

    def _step_slice(self, lo, hi, q_des, a_norm, reward, success):
        """Full physics/reward pipeline for environments [lo, hi)."""
        sl = slice(lo, hi)
        cfg = self.cfg
        state = JointState(self.q[sl], self.qd[sl])
        tau = pd_torque(self.arm, q_des[sl], state)
        new_state, raw = integrate(self.arm, state, tau, cfg.dt, cfg.substeps)
        self.q[sl] = new_state.q
        self.qd[sl] = new_state.qd

        tip = forward_kinematics(self.arm, new_state.q)
        box = BoxPose(self.box_x[sl], self.box_y[sl], self.box_yaw[sl])
        box = resolve_contact(box, tip.position[..., :2], tip.position[..., 2], self.cavity)
        self.box_x[sl] = box.x
        self.box_y[sl] = box.y
        self.box_yaw[sl] = box.yaw

        cmd = Command(BoxPose(self.tgt_x[sl], self.tgt_y[sl], self.tgt_yaw[sl]))
        terms = reward_terms(self.arm, raw, tau, tip, box, cmd, cfg.rod_ref_height)
        r = total_reward(terms, cfg.weights)
        reward[sl] = r
        success[sl] = is_success(box, cmd, cfg.success_pos, cfg.success_yaw)
        self.ep_return[sl] += r
        self.last_action[sl] = a_norm[sl]
