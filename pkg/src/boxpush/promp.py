"""Movement-primitive trajectory generator: basis weights -> desired joint
positions, conditioned to start exactly at the current configuration.

The basis is a row-normalized grid of Gaussians over the phase z = t/(T-1).
Start conditioning subtracts the phase-0 basis values, so the first row of
every generated trajectory equals the start configuration bit-for-bit and
the rest stays linear in the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_JOINTS = 7


@dataclass
class ProMPConfig:
    n_basis: int = 5
    bandwidth: float = 0.2
    weight_scale: float = 0.3
    horizon: int = 100

    def __post_init__(self):
        if self.n_basis < 2:
            raise ValueError("need at least 2 basis functions")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")


def basis_matrix(cfg: ProMPConfig) -> np.ndarray:
    """(T, K) normalized Gaussian basis: rows sum to one."""
    z = np.arange(cfg.horizon, dtype=np.float64) / (cfg.horizon - 1)
    centers = np.linspace(0.0, 1.0, cfg.n_basis)
    phi = np.exp(-((z[:, None] - centers[None, :]) ** 2) / (2.0 * cfg.bandwidth ** 2))
    return phi / phi.sum(axis=1, keepdims=True)


def _generate(shifted_basis, weight_scale, w, q0):
    """Core trajectory assembly shared with callers that cache the basis.

    shifted_basis is basis_matrix minus its first row; summation runs in a
    fixed order over k so results do not depend on batch size or worker
    partition.
    """
    w = np.asarray(w, dtype=np.float64)
    q0 = np.asarray(q0, dtype=np.float64)
    horizon, n_basis = shifted_basis.shape
    batch = w.shape[:-2]
    pos = np.broadcast_to(q0[..., None, :], batch + (horizon, N_JOINTS)).copy()
    for k in range(n_basis):
        pos += weight_scale * shifted_basis[:, k, None] * w[..., None, :, k]
    pos[..., 0, :] = q0  # exact start conditioning
    return pos


def generate(cfg: ProMPConfig, w, q0, qd0=None) -> np.ndarray:
    """Desired joint trajectory (..., T, 7) for weights w (..., 7, K).

    qd0 is accepted for interface parity but unused: episodes always start
    from rest, which makes a velocity condition at phase 0 inert.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-2:] != (N_JOINTS, cfg.n_basis):
        raise ValueError(f"weights must have shape (..., {N_JOINTS}, {cfg.n_basis})")
    basis = basis_matrix(cfg)
    return _generate(basis - basis[0:1], cfg.weight_scale, w, q0)
