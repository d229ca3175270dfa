"""Quasi-static planar contact between the rod tip and the box cavity.

The box is massless: its pose changes only while the tip penetrates an
inner cavity wall, by exactly the constraint projection that puts the tip
back inside.  Translation follows the penetrated wall; rotation couples in
through the tangential contact offset (lever arm), scaled by rot_coupling.
Rotation is applied about the tip point, which keeps the tip's box-frame
coordinates invariant, so containment after resolution is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mathcore import wrap_to_pi


@dataclass
class BoxPose:
    """Planar pose: x, y in meters, yaw in radians, broadcastable arrays."""

    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.yaw = np.asarray(self.yaw, dtype=np.float64)

    def copy(self):
        return BoxPose(self.x.copy(), self.y.copy(), self.yaw.copy())


@dataclass
class CavityModel:
    """Inner cavity geometry and the translation-rotation coupling constant."""

    half_width: float = 0.04
    rot_coupling: float = 3.0
    insert_height: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.half_width < 0.05:
            raise ValueError("half_width must lie in (0, 0.05)")
        if self.rot_coupling < 0.0:
            raise ValueError("rot_coupling must be >= 0")


def tip_in_box_frame(box: BoxPose, tip_xy):
    """Tip position expressed in the box frame: R(yaw)^T (tip - center)."""
    tip_xy = np.asarray(tip_xy, dtype=np.float64)
    dx = tip_xy[..., 0] - box.x
    dy = tip_xy[..., 1] - box.y
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def planar_distance(box: BoxPose, target: BoxPose):
    """Euclidean distance between two box positions in the table plane."""
    dx = box.x - target.x
    dy = box.y - target.y
    return np.sqrt(dx * dx + dy * dy)


def resolve_contact(box: BoxPose, tip_xy, tip_z, cav: CavityModel) -> BoxPose:
    """Project the box pose so the tip lies inside the cavity again.

    No contact (tip above insert height, or inside the cavity) returns the
    input pose values bit-for-bit; the box never moves on its own.
    """
    tip_xy = np.asarray(tip_xy, dtype=np.float64)
    tip_z = np.asarray(tip_z, dtype=np.float64)
    w = cav.half_width
    kappa = cav.rot_coupling

    # tip_in_box_frame, unpacked (this is the engine's hottest contact path)
    dx = tip_xy[..., 0] - box.x
    dy = tip_xy[..., 1] - box.y
    cb, sb = np.cos(box.yaw), np.sin(box.yaw)
    px = cb * dx + sb * dy
    py = -sb * dx + cb * dy
    inserted = tip_z < cav.insert_height
    d_x = np.where(inserted, np.maximum(np.abs(px) - w, 0.0), 0.0)
    d_y = np.where(inserted, np.maximum(np.abs(py) - w, 0.0), 0.0)
    active = (d_x > 0.0) | (d_y > 0.0)

    # translate so the penetrated wall(s) follow the tip
    sx = np.sign(px)
    sy = np.sign(py)
    tx = sx * d_x
    ty = sy * d_y
    new_x = box.x + cb * tx - sb * ty
    new_y = box.y + sb * tx + cb * ty

    # torque sign from lever x push direction (2-D cross product), offsets
    # clamped to the wall extent for corner contacts
    off_x = np.minimum(np.maximum(px, -w), w)
    off_y = np.minimum(np.maximum(py, -w), w)
    dyaw = kappa * (d_x * (-sx) * off_y + d_y * sy * off_x) / w

    # rotate about the tip: keeps the tip's box-frame coordinates unchanged
    cd, sd = np.cos(dyaw), np.sin(dyaw)
    rx = new_x - tip_xy[..., 0]
    ry = new_y - tip_xy[..., 1]
    fx = tip_xy[..., 0] + cd * rx - sd * ry
    fy = tip_xy[..., 1] + sd * rx + cd * ry
    fyaw = wrap_to_pi(box.yaw + dyaw)

    return BoxPose(
        np.where(active, fx, box.x),
        np.where(active, fy, box.y),
        np.where(active, fyaw, box.yaw),
    )
