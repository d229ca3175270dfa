"""7-DoF arm model: rod-tip forward kinematics, PD torque law, per-joint
integration, and joint-limit accounting.

The dynamics are deliberately simple: each joint is an independent damped
double integrator driven by the PD torque, stepped with semi-implicit Euler
substeps.  That is the engine's documented stand-in for full articulated
rigid-body physics; the kinematic chain itself uses the published table for
the arm, loaded from config rather than hard-coded here.

All operations broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


N_JOINTS = 7


@dataclass
class JointState:
    """Joint positions q and velocities qd, shape (..., 7)."""

    q: np.ndarray
    qd: np.ndarray


@dataclass
class TipPose:
    """World pose of the rod tip: position (..., 3), orientation quat (..., 4)."""

    position: np.ndarray
    orientation: np.ndarray


@dataclass
class ArmModel:
    """Kinematic chain parameters plus actuator limits and PD gains.

    link_trans[i] / link_rot[i] give the fixed transform from joint frame
    i-1 to the (pre-rotation) frame of joint i; every joint then rotates
    about its local z axis.  rod_offset extends from the last joint frame
    to the rod tip along tool z (flange plate plus push rod).
    """

    link_trans: np.ndarray  # (7, 3)
    link_rot: np.ndarray  # (7, 4) quaternions, (w, x, y, z)
    rod_offset: float
    q_lo: np.ndarray
    q_hi: np.ndarray
    qd_max: np.ndarray
    tau_max: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    inertia: np.ndarray
    damping: np.ndarray

    def __post_init__(self):
        for name in ("link_trans", "link_rot", "q_lo", "q_hi", "qd_max",
                     "tau_max", "kp", "kd", "inertia", "damping"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.link_trans.shape != (N_JOINTS, 3) or self.link_rot.shape != (N_JOINTS, 4):
            raise ValueError("kinematic chain must describe exactly 7 joints")
        if not np.all(self.q_lo < self.q_hi):
            raise ValueError("q_lo must be strictly below q_hi")
        if np.any(self.kp <= 0) or np.any(self.kd <= 0) or np.any(self.inertia <= 0):
            raise ValueError("kp, kd and inertia must be positive")

    @classmethod
    def from_dh(cls, dh_rows, flange_offset, rod_length, **limits):
        """Build the chain from (a, d, alpha) rows in Craig's convention.

        Each row maps to the fixed transform Rx(alpha) Tx(a) Tz(d) followed
        by the joint's z rotation; the trailing Tz(flange + rod) commutes
        with the last z rotation, so it folds into a single rod offset.
        """
        trans = np.zeros((N_JOINTS, 3))
        rot = np.zeros((N_JOINTS, 4))
        for i, (a, d, alpha) in enumerate(dh_rows):
            ca, sa = np.cos(alpha), np.sin(alpha)
            trans[i] = (a, -sa * d, ca * d)  # Rx(alpha) applied to (a, 0, d)
            rot[i] = (np.cos(alpha / 2), np.sin(alpha / 2), 0.0, 0.0)
        return cls(trans, rot, float(flange_offset) + float(rod_length), **limits)


def forward_kinematics(model: ArmModel, q) -> TipPose:
    """World pose of the rod tip for joint angles q (..., 7).

    Written on unpacked quaternion components with the per-joint constant
    transforms specialized (x-axis fixed rotation, z-axis joint rotation),
    because this runs once per environment per control step.
    """
    q = np.asarray(q, dtype=np.float64)
    batch = q.shape[:-1]
    half = 0.5 * q
    c, s = np.cos(half), np.sin(half)
    rw = np.ones(batch)
    rx = np.zeros(batch)
    ry = np.zeros(batch)
    rz = np.zeros(batch)
    px = np.zeros(batch)
    py = np.zeros(batch)
    pz = np.zeros(batch)
    for i in range(N_JOINTS):
        tx, ty, tz = model.link_trans[i]
        if tx != 0.0 or ty != 0.0 or tz != 0.0:
            px, py, pz = _add_rotated(px, py, pz, rw, rx, ry, rz, tx, ty, tz)
        cw, cx = model.link_rot[i, 0], model.link_rot[i, 1]
        if cx != 0.0:  # fixed rotation about local x by alpha
            rw, rx, ry, rz = (rw * cw - rx * cx, rw * cx + rx * cw,
                              ry * cw + rz * cx, rz * cw - ry * cx)
        ci, si = c[..., i], s[..., i]  # joint rotation about local z
        rw, rx, ry, rz = (rw * ci - rz * si, rx * ci + ry * si,
                          ry * ci - rx * si, rz * ci + rw * si)
    px, py, pz = _add_rotated(px, py, pz, rw, rx, ry, rz, 0.0, 0.0, model.rod_offset)
    return TipPose(np.stack([px, py, pz], axis=-1), np.stack([rw, rx, ry, rz], axis=-1))


def _add_rotated(px, py, pz, w, x, y, z, tx, ty, tz):
    """p + R(quat) t for a constant t, skipping its zero components."""
    ax = ay = az = 0.0
    if tx != 0.0:
        ax = tx * (1.0 - 2.0 * (y * y + z * z))
        ay = tx * 2.0 * (x * y + w * z)
        az = tx * 2.0 * (x * z - w * y)
    if ty != 0.0:
        ax = ax + ty * 2.0 * (x * y - w * z)
        ay = ay + ty * (1.0 - 2.0 * (x * x + z * z))
        az = az + ty * 2.0 * (y * z + w * x)
    if tz != 0.0:
        ax = ax + tz * 2.0 * (x * z + w * y)
        ay = ay + tz * 2.0 * (y * z - w * x)
        az = az + tz * (1.0 - 2.0 * (x * x + y * y))
    return px + ax, py + ay, pz + az


def pd_torque(model: ArmModel, q_des, s: JointState):
    """Saturated PD torque toward the desired joint positions."""
    tau = model.kp * (np.asarray(q_des, dtype=np.float64) - s.q) - model.kd * s.qd
    return np.minimum(np.maximum(tau, -model.tau_max), model.tau_max)


def integrate(model: ArmModel, s: JointState, tau, dt, substeps):
    """Advance the per-joint dynamics by dt using semi-implicit Euler substeps.

    Returns (state, raw): the clamped state that propagates, and the final
    substep's pre-clamp positions/velocities, which the reward uses for
    limit accounting.  Velocity is clamped to +-qd_max for the update only;
    a joint pinned at a position limit has its velocity zeroed.
    """
    if substeps < 1 or dt <= 0:
        raise ValueError("integrate requires dt > 0 and substeps >= 1")
    q = np.asarray(s.q, dtype=np.float64)
    qd = np.asarray(s.qd, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd)) and np.all(np.isfinite(tau))):
        raise ValueError("integrate requires finite state and torque")
    h = dt / substeps
    decay = 1.0 - model.damping / model.inertia * h
    gain = h / model.inertia
    q_raw = q
    qd_raw = qd
    for _ in range(substeps):
        qd_raw = qd * decay + tau * gain
        qd = np.minimum(np.maximum(qd_raw, -model.qd_max), model.qd_max)
        q_raw = q + qd * h
        q = np.minimum(np.maximum(q_raw, model.q_lo), model.q_hi)
        qd = np.where(q_raw == q, qd, 0.0)
    return JointState(q, qd), JointState(q_raw, qd_raw)


def limit_excess(model: ArmModel, s: JointState):
    """Total position and velocity limit violation, summed over joints.

    Evaluate on pre-clamp values (the raw state from integrate) to see the
    violation the clamping removed.
    """
    over = np.maximum(s.q - model.q_hi, 0.0) + np.maximum(model.q_lo - s.q, 0.0)
    speed = np.maximum(np.abs(s.qd) - model.qd_max, 0.0)
    return np.sum(over + speed, axis=-1)


def rod_down_error(tip: TipPose):
    """Angle in [0, pi] between the rod axis (tool z) and world -z."""
    qx = tip.orientation[..., 1]
    qy = tip.orientation[..., 2]
    # world-z component of R(q) e_z
    axis_z = 1.0 - 2.0 * (qx * qx + qy * qy)
    return np.arccos(np.minimum(np.maximum(-axis_z, -1.0), 1.0))
