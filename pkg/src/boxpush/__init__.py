"""Deterministic batched box-pushing RL engine.

Modules:
  mathcore   angle/quaternion helpers and counter-based random streams
  kinematics 7-DoF arm FK, PD control, per-joint integration
  pushworld  quasi-static cavity contact model
  env        batched step-based environment
  promp      movement-primitive trajectory generator
  bbrl       black-box (episode-level) wrapper
  policy     MLP with manual gradients, Gaussian head, Adam, checkpoints
  ppo        PPO/GAE training loop
  harness    config files, CLI, benchmark, metrics, plots
"""

__version__ = "0.1.0"
