"""Independent forward-kinematics reference for the 7-DoF arm.

Builds the tip pose from plain 4x4 homogeneous matrices over the published
kinematic table (Craig convention: T = Rx(alpha) Tx(a) Rz(theta) Tz(d)),
deliberately sharing no code with the package's quaternion-based FK.  Used
to freeze expected values into the test suite and to cross-check random
configurations.

Run:  python scripts/fk_oracle.py
"""

import numpy as np

# (a, d, alpha) per joint, Craig/modified-DH, meters and radians
PANDA_DH = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -np.pi / 2),
    (0.0, 0.316, np.pi / 2),
    (0.0825, 0.0, np.pi / 2),
    (-0.0825, 0.384, -np.pi / 2),
    (0.0, 0.0, np.pi / 2),
    (0.088, 0.0, np.pi / 2),
]
FLANGE_OFFSET = 0.107  # flange plate, along joint-7 z
ROD_LENGTH = 0.1  # push rod beyond the flange, along tool z


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])


def _tx(v):
    m = np.eye(4)
    m[0, 3] = v
    return m


def _tz(v):
    m = np.eye(4)
    m[2, 3] = v
    return m


def tip_matrix(q, rod_offset=FLANGE_OFFSET + ROD_LENGTH):
    """4x4 world pose of the rod tip for joint angles q (7,)."""
    t = np.eye(4)
    for (a, d, alpha), qi in zip(PANDA_DH, q):
        t = t @ _rx(alpha) @ _tx(a) @ _rz(qi) @ _tz(d)
    return t @ _tz(rod_offset)


def tip_pose(q, rod_offset=FLANGE_OFFSET + ROD_LENGTH):
    """(position (3,), rotation matrix (3,3)) of the rod tip."""
    m = tip_matrix(q, rod_offset)
    return m[:3, 3], m[:3, :3]


if __name__ == "__main__":
    np.set_printoptions(precision=12, suppress=False)
    for name, q in [
        ("zeros", np.zeros(7)),
        ("ready", np.array([0.0, -np.pi / 4, 0.0, -3 * np.pi / 4, 0.0, np.pi / 2, np.pi / 4])),
    ]:
        pos, rot = tip_pose(q)
        print(f"q = {name}")
        print("  tip position:", pos)
        print("  tool z axis in world:", rot[:, 2])
