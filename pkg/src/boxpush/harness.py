"""Operational surface: config files, CLI, benchmark mode, metrics, plots.

Configuration is TOML: the package ships an annotated default file
(data/default.toml) that doubles as the schema; user files override it and
unknown keys are rejected with a line hint.  Trainer defaults depend on the
mode (step vs bb) and are resolved here before user overrides apply.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .bbrl import BlackBoxEnv, context_mask
from .env import BoxPushingEnv, ConfigError, EnvConfig, RewardWeights
from .kinematics import ArmModel
from .mathcore import RngStream
from .policy import MLP, load_checkpoint, save_checkpoint, sample_and_logprob
from .ppo import NOISE_STREAM_BASE, PPOConfig, RunningNormalizer
from .promp import ProMPConfig
from .pushworld import CavityModel

log = logging.getLogger("boxpush")

BENCH_STREAM = (1 << 33) + 3
EVAL_NOISE_STREAM_BASE = 1 << 34

# keys that may appear in user files but are absent from the default file
_OPTIONAL_KEYS = {("arm", "kd")}


@dataclass
class RunConfig:
    mode: str
    seed: int
    n_envs: int
    workers: int
    out: str
    checkpoint_every: int
    max_iterations: int
    wall_clock_budget_s: float
    eval_episodes: int
    env: EnvConfig
    arm: ArmModel
    cavity: CavityModel
    promp: ProMPConfig
    bb_context: tuple
    ppo: PPOConfig


@dataclass
class MetricsRow:
    iteration: int
    env_interactions: int
    wall_seconds: float
    fps: float
    mean_return: float
    success_rate: float


METRICS_COLUMNS = ("iteration", "env_interactions", "wall_seconds", "fps",
                   "mean_return", "success_rate")


# -- config loading ----------------------------------------------------------

def _default_dict():
    text = resources.files("boxpush").joinpath("data/default.toml").read_text()
    return tomllib.loads(text)


def _line_of(source_text, key):
    if source_text is None:
        return "?"
    m = re.search(rf"^\s*{re.escape(key)}\s*=", source_text, re.MULTILINE)
    if m is None:
        m = re.search(rf"^\s*\[.*{re.escape(key)}.*\]", source_text, re.MULTILINE)
    return source_text.count("\n", 0, m.start()) + 1 if m else "?"


def _merge(base, user, source_text, prefix=()):
    """Overlay user onto base, rejecting keys absent from the defaults."""
    for key, value in user.items():
        path = prefix + (key,)
        if key not in base and path not in _OPTIONAL_KEYS:
            raise ConfigError(
                f"unknown config key {'.'.join(path)!r} (line {_line_of(source_text, key)})"
            )
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value, source_text, path)
        else:
            base[key] = value
    return base


def load_config(path=None, mode="step", overrides=None) -> RunConfig:
    """Build a validated RunConfig from the defaults plus an optional file.

    overrides is a flat dict of CLI-level settings (seed, n_envs, out,
    workers, max_iterations, wall_clock_budget_s) applied last.  The
    BOXPUSH_WORKERS environment variable overrides the configured worker
    count.
    """
    cfg = _default_dict()
    if path is not None:
        try:
            with open(path, "rb") as f:
                text = f.read().decode()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        _merge(cfg, user, text)

    run = cfg["run"]
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in ("seed", "n_envs", "workers", "out", "checkpoint_every",
                "max_iterations", "wall_clock_budget_s", "eval_episodes"):
        if key in overrides:
            run[key] = overrides[key]
    env_workers = os.environ.get("BOXPUSH_WORKERS")
    if env_workers is not None:
        try:
            run["workers"] = int(env_workers)
        except ValueError:
            raise ConfigError(f"BOXPUSH_WORKERS must be an integer, got {env_workers!r}")

    if mode not in ("step", "bb"):
        raise ConfigError(f"unknown mode {mode!r}")
    if run["n_envs"] < 1:
        raise ConfigError("run.n_envs must be >= 1")
    if run["seed"] < 0:
        raise ConfigError("run.seed must be >= 0")

    arm_cfg = cfg["arm"]
    kp = np.asarray(arm_cfg["kp"], dtype=np.float64)
    inertia = np.asarray(arm_cfg["inertia"], dtype=np.float64)
    kd = arm_cfg.get("kd")
    if kd is None:
        kd = 2.0 * np.sqrt(kp * inertia)  # critical damping
    try:
        arm = ArmModel.from_dh(
            arm_cfg["dh"], arm_cfg["flange_offset"], arm_cfg["rod_length"],
            q_lo=arm_cfg["q_lo"], q_hi=arm_cfg["q_hi"], qd_max=arm_cfg["qd_max"],
            tau_max=arm_cfg["tau_max"], kp=kp, kd=kd, inertia=inertia,
            damping=arm_cfg["damping"],
        )
        env_tbl = cfg["env"]
        env = EnvConfig(
            n_envs=run["n_envs"],
            dt=env_tbl["dt"],
            horizon=env_tbl["horizon"],
            substeps=env_tbl["substeps"],
            q0=tuple(arm_cfg["q0"]),
            box0=tuple(env_tbl["box0"]),
            target_x=tuple(env_tbl["target_x"]),
            target_y=tuple(env_tbl["target_y"]),
            target_yaw=tuple(env_tbl["target_yaw"]),
            weights=RewardWeights(
                rod=env_tbl["reward"]["rod"],
                rod_rot=env_tbl["reward"]["rod_rot"],
                energy=env_tbl["reward"]["energy"],
                limits=env_tbl["reward"]["limits"],
                rot=env_tbl["reward"]["rot"],
                goal=env_tbl["reward"]["goal"],
            ),
            success_pos=env_tbl["success_pos"],
            success_yaw=env_tbl["success_yaw"],
            box_z=env_tbl["box_z"],
            rod_ref_height=env_tbl["rod_ref_height"],
            seed=run["seed"],
        )
        cavity = CavityModel(
            half_width=cfg["cavity"]["half_width"],
            rot_coupling=cfg["cavity"]["rot_coupling"],
            insert_height=cfg["cavity"]["insert_height"],
        )
        promp = ProMPConfig(
            n_basis=cfg["promp"]["n_basis"],
            bandwidth=cfg["promp"]["bandwidth"],
            weight_scale=cfg["promp"]["weight_scale"],
            horizon=env_tbl["horizon"],
        )
        ppo_tbl = dict(cfg["ppo"])
        mode_tbl = ppo_tbl.pop("step"), ppo_tbl.pop("bb")
        mode_over = dict(mode_tbl[0] if mode == "step" else mode_tbl[1])
        ppo = PPOConfig.for_mode(
            mode,
            gamma=ppo_tbl["gamma"],
            lam=ppo_tbl["lam"],
            clip=ppo_tbl["clip"],
            lr=ppo_tbl["lr"],
            entropy_coef=ppo_tbl["entropy_coef"],
            hidden=tuple(ppo_tbl["hidden"]),
            init_std=ppo_tbl["init_std"],
            **mode_over,
        )
    except (ValueError, KeyError) as e:
        raise ConfigError(str(e)) from e

    return RunConfig(
        mode=mode,
        seed=run["seed"],
        n_envs=run["n_envs"],
        workers=max(1, int(run["workers"])),
        out=run["out"],
        checkpoint_every=int(run["checkpoint_every"]),
        max_iterations=int(run["max_iterations"]),
        wall_clock_budget_s=float(run["wall_clock_budget_s"]),
        eval_episodes=int(run["eval_episodes"]),
        env=env,
        arm=arm,
        cavity=cavity,
        promp=promp,
        bb_context=tuple(cfg["bb"]["context"]),
        ppo=ppo,
    )


# -- environment assembly ----------------------------------------------------

def build_env(run_cfg: RunConfig, stream_offset=0):
    if run_cfg.workers > 1:
        if stream_offset:
            raise ConfigError("stream offsets require a single-process environment")
        from .parallel import ParallelEnv
        return ParallelEnv(run_cfg.env, run_cfg.arm, run_cfg.cavity, run_cfg.workers)
    return BoxPushingEnv(run_cfg.env, run_cfg.arm, run_cfg.cavity,
                         stream_offset=stream_offset)


def build_bb_env(run_cfg: RunConfig, stream_offset=0) -> BlackBoxEnv:
    return BlackBoxEnv(build_env(run_cfg, stream_offset), run_cfg.promp,
                       mask=context_mask(run_cfg.bb_context))


def build_training_env(run_cfg: RunConfig):
    return build_bb_env(run_cfg) if run_cfg.mode == "bb" else build_env(run_cfg)


def close_env(env):
    env.close()


# -- metrics and checkpoints -------------------------------------------------

def metrics_path(run_cfg: RunConfig):
    os.makedirs(run_cfg.out, exist_ok=True)
    return os.path.join(run_cfg.out, "metrics.csv")


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            writer.writerow([r.iteration, r.env_interactions, f"{r.wall_seconds:.6f}",
                             f"{r.fps:.3f}", repr(r.mean_return), repr(r.success_rate)])


def read_metrics_csv(path):
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != METRICS_COLUMNS:
            raise ConfigError(f"{path}: malformed metrics CSV header")
        for rec in reader:
            rows.append(MetricsRow(
                iteration=int(rec["iteration"]),
                env_interactions=int(rec["env_interactions"]),
                wall_seconds=float(rec["wall_seconds"]),
                fps=float(rec["fps"]),
                mean_return=float(rec["mean_return"]),
                success_rate=float(rec["success_rate"]),
            ))
    return rows


def checkpoint_path(run_cfg: RunConfig, iteration=None):
    os.makedirs(run_cfg.out, exist_ok=True)
    name = "checkpoint_final.bin" if iteration is None else f"checkpoint_iter{iteration}.bin"
    return os.path.join(run_cfg.out, name)


def save_policy(run_cfg, iteration, actor, log_std, critic, normalizer):
    tensors = (actor.params() + [log_std] + critic.params()
               + [np.array([normalizer.count]), normalizer.mean, normalizer.m2])
    save_checkpoint(checkpoint_path(run_cfg, iteration), tensors)


def load_policy(run_cfg: RunConfig, path):
    """Rebuild (actor, log_std, critic, normalizer) from a checkpoint."""
    tensors = load_checkpoint(path)
    n_layers = len(run_cfg.ppo.hidden) + 1
    expected = 2 * n_layers + 1 + 2 * n_layers + 3
    if len(tensors) != expected:
        raise ConfigError(f"{path}: expected {expected} tensors, found {len(tensors)}"
                          " (checkpoint does not match the configured architecture)")
    a = tensors[:2 * n_layers]
    actor = MLP(a[0::2], a[1::2])
    log_std = tensors[2 * n_layers]
    c = tensors[2 * n_layers + 1:4 * n_layers + 1]
    critic = MLP(c[0::2], c[1::2])
    count, mean, m2 = tensors[4 * n_layers + 1:]
    normalizer = RunningNormalizer(float(count[0]), mean, m2)
    return actor, log_std, critic, normalizer


# -- evaluation --------------------------------------------------------------

def evaluate(run_cfg: RunConfig, checkpoint, episodes=None):
    """Success rate and mean return of a saved policy over full episodes."""
    episodes = episodes or run_cfg.eval_episodes
    actor, log_std, critic, normalizer = load_policy(run_cfg, checkpoint)
    env = build_training_env(run_cfg)
    try:
        noise = RngStream(run_cfg.seed,
                          stream_id=EVAL_NOISE_STREAM_BASE + np.arange(env.n_envs))
        returns, successes = [], []
        while sum(len(r) for r in returns) < episodes:
            obs = env.observe()
            for _ in range(_steps_per_episode(env)):
                used = normalizer.normalize(obs) if run_cfg.ppo.normalize_obs else obs
                action, _ = sample_and_logprob(actor.forward(used), log_std, noise)
                obs, reward, done, info = env.step(action)
            returns.append(info["episode_return"].copy())
            successes.append(info["episode_success"].copy())
        returns = np.concatenate(returns)[:episodes]
        successes = np.concatenate(successes)[:episodes]
        return {"episodes": episodes,
                "success_rate": float(successes.mean()),
                "mean_return": float(returns.mean())}
    finally:
        env.close()


def _steps_per_episode(env):
    return 1 if isinstance(env, BlackBoxEnv) else env.cfg.horizon


def random_policy_success(run_cfg: RunConfig, episodes=1000):
    """Success rate of uniform random actions; the learning-signal baseline."""
    env = build_env(run_cfg)
    try:
        stream = RngStream(run_cfg.seed, stream_id=BENCH_STREAM + 1)
        successes = []
        while sum(len(s) for s in successes) < episodes:
            for _ in range(env.cfg.horizon):
                acts = stream.uniform_block(env.n_envs * env.action_dim, -1.0, 1.0)
                _, _, done, info = env.step(acts.reshape(env.n_envs, env.action_dim))
            successes.append(info["episode_success"].copy())
        return float(np.concatenate(successes)[:episodes].mean())
    finally:
        env.close()


# -- benchmark ---------------------------------------------------------------

@dataclass
class BenchRow:
    n_envs: int
    workers: int
    steps: int
    seconds: float
    env_steps_per_sec: float
    speedup: float
    efficiency: float


def bench(run_cfg: RunConfig, n_envs_list=(256, 1024, 4096),
          workers_list=(1, 2, 4, 8), window=1.0, warmup_steps=5):
    """Raw stepping throughput sweep with random actions, no learning.

    Reports env-steps/second per (n_envs, workers) plus speedup and
    parallel efficiency relative to the same batch on one worker.
    """
    from dataclasses import replace

    rows = []
    for n in n_envs_list:
        base_fps = None
        for w in workers_list:
            cfg = RunConfig(**{**run_cfg.__dict__,
                               "env": replace(run_cfg.env, n_envs=n),
                               "n_envs": n, "workers": w})
            env = build_env(cfg)
            stream = RngStream(cfg.seed, stream_id=BENCH_STREAM)
            try:
                actions = stream.uniform_block(n * 7, -1.0, 1.0).reshape(n, 7)
                for _ in range(warmup_steps):
                    env.step(actions)
                steps = 0
                t0 = time.perf_counter()
                while True:
                    env.step(actions)
                    steps += 1
                    elapsed = time.perf_counter() - t0
                    if elapsed >= window:
                        break
                fps = steps * n / elapsed
            finally:
                env.close()
            if base_fps is None:
                base_fps = fps
            speedup = fps / base_fps
            rows.append(BenchRow(n, w, steps, elapsed, fps, speedup, speedup / w))
            log.info("bench n_envs=%d workers=%d: %.0f env-steps/s (speedup %.2f, eff %.2f)",
                     n, w, fps, speedup, speedup / w)
    return rows


def write_bench_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n_envs", "workers", "steps", "seconds",
                         "env_steps_per_sec", "speedup", "efficiency"])
        for r in rows:
            writer.writerow([r.n_envs, r.workers, r.steps, f"{r.seconds:.6f}",
                             f"{r.env_steps_per_sec:.1f}", f"{r.speedup:.4f}",
                             f"{r.efficiency:.4f}"])


def bench_chart(rows, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_envs = {}
    for r in rows:
        by_envs.setdefault(r.n_envs, []).append(r)
    fig, ax = plt.subplots(figsize=(7, 4))
    group_names = sorted(by_envs)
    width = 0.8 / max(len(v) for v in by_envs.values())
    for gi, n in enumerate(group_names):
        for wi, r in enumerate(sorted(by_envs[n], key=lambda r: r.workers)):
            ax.bar(gi + wi * width, r.env_steps_per_sec, width * 0.9,
                   label=f"{r.workers} workers" if gi == 0 else None)
    ax.set_xticks([gi + 0.4 - width / 2 for gi in range(len(group_names))])
    ax.set_xticklabels([str(n) for n in group_names])
    ax.set_xlabel("parallel environments")
    ax.set_ylabel("env steps / second")
    ax.set_title("raw stepping throughput")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- plots -------------------------------------------------------------------

def emit_plots(metrics_csvs, out_dir):
    """Success-rate curves vs interactions and vs wall time, as SVG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    series = []
    for path in metrics_csvs:
        rows = read_metrics_csv(path)
        rows.sort(key=lambda r: r.env_interactions)
        label = os.path.splitext(os.path.basename(path))[0]
        if len(metrics_csvs) > 1:
            label = os.path.basename(os.path.dirname(path)) or label
        series.append((label, rows))

    outputs = []
    for fname, xlab, xval in (
        ("success_vs_interactions.svg", "environment interactions",
         lambda r: r.env_interactions),
        ("success_vs_walltime.svg", "training time [s]", lambda r: r.wall_seconds),
    ):
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, rows in series:
            ax.plot([xval(r) for r in rows], [r.success_rate for r in rows], label=label)
        ax.set_xlabel(xlab)
        ax.set_ylabel("success rate")
        ax.set_ylim(0.0, 1.0)
        if series:
            ax.legend()
        fig.tight_layout()
        out = os.path.join(out_dir, fname)
        fig.savefig(out)
        plt.close(fig)
        outputs.append(out)
    return outputs


# -- CLI ---------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", default=None, help="TOML config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-envs", type=int, default=None, dest="n_envs")
    p.add_argument("--out", default=None, help="output directory")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="boxpush",
                                     description="box-pushing RL engine")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train-step", "train-bb"):
        p = sub.add_parser(name, help=f"PPO training, {name.split('-')[1]} mode")
        _add_common(p)
    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("step", "bb"), default="step")
    p.add_argument("--episodes", type=int, default=None)
    p = sub.add_parser("bench", help="stepping throughput sweep")
    _add_common(p)
    p = sub.add_parser("plot", help="emit SVG curves from metrics CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out", default="plots")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


def _dispatch(args):
    from . import ppo

    if args.command in ("train-step", "train-bb"):
        mode = "step" if args.command == "train-step" else "bb"
        run_cfg = load_config(args.config, mode=mode, overrides=vars(args))
        rows = ppo.train(run_cfg)
        last = rows[-1] if rows else None
        if last:
            log.info("done: %d iterations, success rate %.3f, mean return %.2f",
                     last.iteration, last.success_rate, last.mean_return)
        return 0
    if args.command == "eval":
        run_cfg = load_config(args.config, mode=args.mode, overrides=vars(args))
        result = evaluate(run_cfg, args.checkpoint, args.episodes)
        log.info("eval over %d episodes: success rate %.3f, mean return %.2f",
                 result["episodes"], result["success_rate"], result["mean_return"])
        return 0
    if args.command == "bench":
        run_cfg = load_config(args.config, mode="step", overrides=vars(args))
        rows = bench(run_cfg)
        os.makedirs(run_cfg.out, exist_ok=True)
        write_bench_csv(os.path.join(run_cfg.out, "bench.csv"), rows)
        bench_chart(rows, os.path.join(run_cfg.out, "bench.svg"))
        log.info("bench results in %s", run_cfg.out)
        return 0
    if args.command == "plot":
        outputs = emit_plots(args.csvs, args.out)
        log.info("wrote %s", ", ".join(outputs))
        return 0
    raise ConfigError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
