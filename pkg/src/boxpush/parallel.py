"""Process-sharded batched environment.

Each worker process owns a contiguous slice of environments (a plain
BoxPushingEnv with the matching stream offset) and steps it on command;
observations, rewards and episode statistics travel through shared memory.
Because every environment draws from its own counter stream and all math
is elementwise, the shard layout is invisible in the results: any worker
count produces bit-identical trajectories to the single-process engine.

Forked workers sidestep the interpreter lock, which thread pools cannot do
for this op-granularity.
"""

from __future__ import annotations

import multiprocessing as mp

import numpy as np

from .env import BoxPushingEnv, EnvConfig, OBS_DIM
from .kinematics import N_JOINTS


def _shared(shape, dtype=np.float64):
    n = int(np.prod(shape))
    if dtype == np.float64:
        raw = mp.RawArray("d", n)
    elif dtype == np.int64:
        raw = mp.RawArray("q", n)
    elif dtype == bool:
        raw = mp.RawArray("b", n)
    else:
        raise ValueError(f"unsupported dtype {dtype}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def _worker_loop(cfg, arm, cavity, lo, hi, conn, shm):
    env = BoxPushingEnv(cfg, arm, cavity, stream_offset=lo)
    sl = slice(lo, hi)
    shm["obs"][sl] = env.observe()
    conn.send("ready")
    while True:
        command = conn.recv()
        if command == "close":
            conn.close()
            return
        try:
            if command == "reset":
                shm["obs"][sl] = env.reset()
            else:
                caller = env.step if command == "step" else env.step_targets
                obs, reward, done, info = caller(shm["actions"][sl])
                shm["obs"][sl] = obs
                shm["reward"][sl] = reward
                shm["done"][sl] = done
                shm["success"][sl] = info["success"]
                if "episode_return" in info:
                    shm["final_obs"][sl] = info["final_observation"]
                    shm["ep_return"][sl] = info["episode_return"]
                    shm["ep_success"][sl] = info["episode_success"]
            conn.send("ok")
        except Exception as e:  # surface worker errors in the parent
            conn.send(e)


class ParallelEnv:
    """BoxPushingEnv-compatible batch sharded over worker processes.

    Supports full-batch reset only; the training loop and the black-box
    wrapper never reset subsets.  All environments stay in lockstep, so
    the parent tracks the step counter itself.
    """

    def __init__(self, cfg: EnvConfig, arm, cavity, workers: int):
        n = cfg.n_envs
        self.cfg = cfg
        self.arm = arm
        self.cavity = cavity
        self.workers = max(1, min(int(workers), n))
        self._shm = {
            "actions": _shared((n, N_JOINTS)),
            "obs": _shared((n, OBS_DIM)),
            "reward": _shared((n,)),
            "done": _shared((n,), bool),
            "success": _shared((n,), bool),
            "final_obs": _shared((n, OBS_DIM)),
            "ep_return": _shared((n,)),
            "ep_success": _shared((n,), bool),
        }
        self._count = 0
        ctx = mp.get_context("fork")
        edges = np.linspace(0, n, self.workers + 1).astype(int)
        self._procs, self._conns = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            parent, child = ctx.Pipe()
            slice_cfg = EnvConfig(**{**cfg.__dict__, "n_envs": int(hi - lo)})
            proc = ctx.Process(
                target=_worker_loop,
                args=(slice_cfg, arm, cavity, int(lo), int(hi), child, self._shm),
                daemon=True,
            )
            proc.start()
            child.close()
            self._procs.append(proc)
            self._conns.append(parent)
        for conn in self._conns:
            conn.recv()

    @property
    def n_envs(self):
        return self.cfg.n_envs

    @property
    def action_dim(self):
        return N_JOINTS

    @property
    def interactions_per_step(self):
        return 1

    @property
    def step_count(self):
        return np.full(self.cfg.n_envs, self._count, dtype=np.int64)

    @property
    def q(self):
        if self._count != 0:
            raise RuntimeError("joint state is only mirrored at episode start")
        return np.tile(np.asarray(self.cfg.q0, dtype=np.float64), (self.cfg.n_envs, 1))

    def observe(self):
        return self._shm["obs"].copy()

    def reset(self, env_ids=None):
        if env_ids is not None:
            raise ValueError("ParallelEnv supports full-batch reset only")
        self._broadcast("reset")
        self._count = 0
        return self.observe()

    def step(self, actions):
        return self._exchange("step", actions)

    def step_targets(self, q_des):
        return self._exchange("step_targets", q_des)

    def _exchange(self, command, actions):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != self._shm["actions"].shape:
            raise ValueError(f"actions must have shape {self._shm['actions'].shape}")
        self._shm["actions"][:] = actions
        self._broadcast(command)
        self._count += 1
        done = self._shm["done"].copy()
        info = {"success": self._shm["success"].copy()}
        if done.any():
            self._count = 0
            info["final_observation"] = self._shm["final_obs"].copy()
            info["episode_return"] = self._shm["ep_return"].copy()
            info["episode_success"] = self._shm["ep_success"].copy()
        return self.observe(), self._shm["reward"].copy(), done, info

    def _broadcast(self, command):
        for conn in self._conns:
            conn.send(command)
        for conn in self._conns:
            result = conn.recv()
            if isinstance(result, Exception):
                raise result

    def close(self):
        for conn in self._conns:
            try:
                conn.send("close")
                conn.close()
            except (BrokenPipeError, OSError):
                pass
        for proc in self._procs:
            proc.join(timeout=5)
            if proc.is_alive():
                proc.terminate()
        self._conns, self._procs = [], []
