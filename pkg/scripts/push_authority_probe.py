"""Controllability probe for the cavity contact model.

Drives a free tip point (speed-capped, always inserted) with a scripted
expert: stir along the walls to correct yaw, then drag the box onto the
target with an off-center contact bias for residual yaw.  Reports the
success ceiling per rotation-coupling value, which bounds any learned
policy.  Used to choose the default rot_coupling.

Run:  python scripts/push_authority_probe.py
"""

import numpy as np

from boxpush.env import EnvConfig, sample_target
from boxpush.mathcore import RngStream, wrap_to_pi, yaw_error
from boxpush.pushworld import BoxPose, CavityModel, resolve_contact

TIP_STEP = 0.03  # 1.5 m/s at dt = 0.02
STEPS = 100


def run_episode(cav, target):
    w = cav.half_width
    box = BoxPose(0.4, 0.0, 0.0)
    tip = np.array([0.4, 0.0])
    phase = None
    stir_radius = 1.8 * w  # small radii barely graze the walls; 1.8w digs in
    for t in range(STEPS):
        dyaw = float(wrap_to_pi(target.yaw - box.yaw))
        vx, vy = float(target.x - box.x), float(target.y - box.y)
        dist = np.hypot(vx, vy)
        steps_left = STEPS - t
        center = np.array([float(box.x), float(box.y)])
        if abs(dyaw) > 0.10 and steps_left > dist / TIP_STEP + 15:
            # stir: trace a circle around the box center; contact happens on
            # the outward half of each wall pass, all with one torque sign,
            # so the circulation direction picks the yaw direction
            rel = tip - center
            if phase is None:
                phase = np.arctan2(rel[1], rel[0])
            phase += np.sign(dyaw) * 0.7 * TIP_STEP / stir_radius
            goal_tip = center + stir_radius * np.array([np.cos(phase), np.sin(phase)])
        else:
            phase = None
            if dist > 0.004:
                u = np.array([vx, vy]) / dist
                perp = np.array([-u[1], u[0]])
                # off-center contact: push direction u with tangential offset
                # -sign(dyaw) rotates the box toward the target yaw
                off = -np.clip(3.0 * dyaw, -0.85, 0.85) * w
                depth = min(dist, 0.02)
                goal_tip = center + (w + depth) * u + off * perp
            else:
                goal_tip = tip  # parked
        delta = goal_tip - tip
        dn = np.linalg.norm(delta)
        if dn > TIP_STEP:
            delta *= TIP_STEP / dn
        tip = tip + delta
        box = resolve_contact(box, tip, 0.02, cav)
    pos_err = float(np.hypot(target.x - box.x, target.y - box.y))
    rot_err = float(yaw_error(box.yaw, target.yaw))
    return (pos_err <= 0.05 and rot_err <= 0.5), pos_err, rot_err


def main():
    cfg = EnvConfig(n_envs=1)
    for kappa in (0.5, 1.0, 2.0, 3.0, 4.0):
        cav = CavityModel(rot_coupling=kappa)
        rng = RngStream(123, stream_id=np.arange(300))
        cmd = sample_target(rng, cfg)
        wins = pos_errs = rot_errs = 0.0
        n = len(cmd.target.x)
        for i in range(n):
            t = BoxPose(cmd.target.x[i], cmd.target.y[i], cmd.target.yaw[i])
            ok, pe, re = run_episode(cav, t)
            wins += ok
            pos_errs += pe
            rot_errs += re
        print(f"kappa={kappa:4.1f}: success {wins/n:5.1%}"
              f"  mean pos err {pos_errs/n:.3f}  mean rot err {rot_errs/n:.3f}")


if __name__ == "__main__":
    main()
