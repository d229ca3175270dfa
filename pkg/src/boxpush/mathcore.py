"""Angle arithmetic, quaternion metrics, and counter-based random streams.

Everything here is elementwise over numpy arrays (plain scalars work too),
so batched callers can evaluate whole environment slices in one call.  The
random streams are pure functions of (seed, stream_id, counter), which is
what makes parallel stepping order-independent: each environment owns a
stream_id and advances only its own counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


def wrap_to_pi(a):
    """Wrap angle(s) in radians into (-pi, pi]. Non-finite input yields NaN."""
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return np.pi - np.remainder(np.pi - a, TWO_PI)


def yaw_error(a, b):
    """Absolute angular distance between two yaw angles, in [0, pi].

    Equals |wrap_to_pi(a - b)|, but computed from |a - b| so the result is
    bitwise symmetric in its arguments.
    """
    d = np.remainder(np.abs(np.asarray(a, dtype=np.float64) - b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def quat_from_yaw(yaw):
    """Unit quaternion (w, x, y, z) for a rotation about world z by yaw."""
    yaw = np.asarray(yaw, dtype=np.float64)
    half = 0.5 * yaw
    out = np.zeros(yaw.shape + (4,))
    out[..., 0] = np.cos(half)
    out[..., 3] = np.sin(half)
    return out


def quat_norm(q):
    q = np.asarray(q, dtype=np.float64)
    return np.sqrt(np.sum(q * q, axis=-1))


def quat_angle(q1, q2):
    """Geodesic angle 2 acos(|<q1, q2>|) between two unit quaternions, [0, pi].

    Computed through the chord length 4 asin(min(|q1 - q2|, |q1 + q2|) / 2),
    which is the same function but exact at q2 = +-q1 (double cover) and
    well-conditioned for small angles.  Raises ValueError if either input
    is not unit length within 1e-9.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    if np.any(np.abs(quat_norm(q1) - 1.0) > 1e-9) or np.any(np.abs(quat_norm(q2) - 1.0) > 1e-9):
        raise ValueError("quat_angle requires unit quaternions")
    chord = np.minimum(quat_norm(q1 - q2), quat_norm(q1 + q2))
    return 4.0 * np.arcsin(np.minimum(0.5 * chord, 1.0))


def quat_mul(a, b):
    """Hamilton product a*b of (w, x, y, z) quaternions, broadcasting."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_rotate(q, v):
    """Rotate vector(s) v by quaternion(s) q: v' = q v q^-1, broadcasting."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., 0]
    u = q[..., 1:4]
    # v + 2*(u x (u x v + w v)); cheaper than building rotation matrices
    t = np.cross(u, v) + w[..., None] * v
    return v + 2.0 * np.cross(u, t)


def _mix64(z):
    """splitmix64 finalizer; full-avalanche 64-bit mix (vectorized)."""
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def _words(seed, stream_id, counter):
    """PRF word for each (seed, stream_id, counter) triple, as uint64."""
    with np.errstate(over="ignore"):  # modular uint64 arithmetic is intended
        k = _mix64(_U64(seed) + _GOLDEN)
        k = _mix64(k ^ np.asarray(stream_id, dtype=_U64))
        return _mix64(k ^ (np.asarray(counter, dtype=_U64) * _GOLDEN))


def _unit(word):
    """uint64 -> float64 uniform in [0, 1) with 53-bit resolution."""
    return (word >> _U64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass
class RngStream:
    """Counter-based random stream(s): output = f(seed, stream_id, counter).

    stream_id and counter may be scalars or aligned arrays, in which case
    each element is an independent stream.  Draw methods advance only the
    counters they consume, so any partition of a batch across workers
    produces bit-identical values.
    """

    seed: int
    stream_id: object = 0
    counter: object = field(default=0)

    def __post_init__(self):
        self.stream_id = np.asarray(self.stream_id, dtype=_U64)
        self.counter = np.asarray(self.counter, dtype=_U64)
        if self.counter.shape != self.stream_id.shape:
            self.counter = np.broadcast_to(self.counter, self.stream_id.shape).copy()

    def _take(self, idx, cols):
        """Counter grid (n, cols) for the selected streams; advances them."""
        sid = self.stream_id if idx is None else self.stream_id[idx]
        ctr = self.counter if idx is None else self.counter[idx]
        grid = ctr[..., None] + np.arange(cols, dtype=_U64)
        if idx is None:
            self.counter = self.counter + _U64(cols)
        else:
            self.counter[idx] = ctr + _U64(cols)
        return sid[..., None], grid

    def uniform(self, lo, hi, idx=None):
        """One draw per selected stream, uniform in [lo, hi). lo > hi raises."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(lo > hi):
            raise ValueError("uniform requires lo <= hi")
        sid, grid = self._take(idx, 1)
        u = _unit(_words(self.seed, sid, grid))[..., 0]
        return lo + u * (hi - lo)

    def uniform_block(self, cols, lo=0.0, hi=1.0, idx=None):
        """(n, cols) uniforms in [lo, hi); consumes cols counters per stream."""
        if lo > hi:
            raise ValueError("uniform requires lo <= hi")
        sid, grid = self._take(idx, cols)
        return lo + _unit(_words(self.seed, sid, grid)) * (hi - lo)

    def normal_block(self, cols, idx=None):
        """(n, cols) standard normals via Box-Muller; consumes 2*cols counters."""
        sid, grid = self._take(idx, 2 * cols)
        w = _words(self.seed, sid, grid)
        u1 = ((w[..., 0::2] >> _U64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)  # (0, 1]
        u2 = _unit(w[..., 1::2])
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


def uniform(stream: RngStream, lo, hi):
    """Uniform draw(s) in [lo, hi) from a stream, advancing its counter."""
    return stream.uniform(lo, hi)
