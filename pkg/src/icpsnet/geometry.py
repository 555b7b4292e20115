"""Quaternion and position math.

Quaternions are stored scalar-first as ``(w, p, q, r)`` arrays and every
function accepts a single quaternion of shape ``(4,)`` or a batch ``(n, 4)``.
Positions are ``(3,)`` or ``(n, 3)`` arrays in meters.

Rotation convention: world frame is right-handed with z up, the camera
looks along its own -Z axis with +Y up, and a pose quaternion maps camera
frame vectors into the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBounds, EmptyInput, NonUnitQuaternion, ZeroNormQuaternion

ZERO_NORM_TOL = 1e-12
UNIT_TOL = 1e-6


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n <= ZERO_NORM_TOL) or not np.all(np.isfinite(q)):
        raise ZeroNormQuaternion(f"cannot normalize quaternion with norm {np.min(n)!r}")
    return q / n


def quat_canonicalize(q) -> np.ndarray:
    """Pick the representative with w >= 0; for w == 0 the first nonzero of (p, q, r) is made positive."""
    q = np.array(q, dtype=np.float64)
    flat = q.reshape(-1, 4)
    for row in flat:
        lead = row[0]
        if lead == 0.0:
            nz = row[1:][row[1:] != 0.0]
            lead = nz[0] if nz.size else 0.0
        if lead < 0.0:
            row *= -1.0
    # negative zeros would break bitwise comparisons of labels
    flat += 0.0
    return flat.reshape(q.shape)


def _check_unit(q: np.ndarray, name: str) -> None:
    n = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise NonUnitQuaternion(f"{name} is not a unit quaternion (norm {n!r})")


def quat_angular_error_deg(a, b) -> np.ndarray | float:
    """Geodesic rotation angle between two unit quaternions, in degrees.

    Equal to ``2*arccos(min(1, |a.b|))`` but evaluated through atan2 of the
    chord lengths, which keeps full precision near 0 and 180 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_unit(a, "a")
    _check_unit(b, "b")
    dot = np.sum(a * b, axis=-1, keepdims=True)
    s = np.where(dot < 0.0, -1.0, 1.0)
    diff = np.linalg.norm(a - s * b, axis=-1)
    summ = np.linalg.norm(a + s * b, axis=-1)
    theta = 4.0 * np.arctan2(diff, summ)
    out = np.degrees(theta)
    return float(out) if out.ndim == 0 else out


def quat_multiply(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix to unit canonical quaternion (Shepperd's branch selection)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_canonicalize(quat_normalize(q))


def look_rotation(forward) -> np.ndarray:
    """Camera-to-world quaternion for a camera looking along ``forward`` with zero roll.

    The camera's right axis is kept horizontal. A vertical ``forward`` has no
    defined yaw; world +Y is then used as the reference for the up axis.
    """
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    right = np.cross(f, [0.0, 0.0, 1.0])
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(f, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, f)
    return matrix_to_quat(np.column_stack([right, up, -f]))


def yaw_pitch_quat(yaw_deg: float, pitch_deg: float = 0.0) -> np.ndarray:
    """Camera facing heading ``yaw`` (degrees from +X toward +Y) tilted by ``pitch`` (up positive)."""
    yaw, pitch = np.radians(yaw_deg), np.radians(pitch_deg)
    f = [np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)]
    return look_rotation(f)


def camera_forward(q) -> np.ndarray:
    return quat_to_matrix(q) @ np.array([0.0, 0.0, -1.0])


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=np.float64)
        return cls(v[:3].copy(), v[3:7].copy())


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-axis [min, max] box in meters. Construction rejects zero or negative extents."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise DegenerateBounds("bounds need three axes")
        if not all(h > l for l, h in zip(lo, hi)):
            raise DegenerateBounds(f"max must exceed min on every axis: min={lo} max={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def min(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def max(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def contains(self, p, strict: bool = True) -> bool:
        p = np.asarray(p)
        if strict:
            return bool(np.all((p > self.min) & (p < self.max)))
        return bool(np.all((p >= self.min) & (p <= self.max)))

    def shrink(self, margin: float) -> "NormalizationBounds":
        return NormalizationBounds(tuple(self.min + margin), tuple(self.max - margin))

    def to_dict(self) -> dict:
        return {"min": list(self.lo), "max": list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationBounds":
        return cls(tuple(d["min"]), tuple(d["max"]))


def normalize_position(p, bounds: NormalizationBounds) -> np.ndarray:
    """Min-max map each axis to [-1, 1]; points outside the bounds extrapolate linearly."""
    p = np.asarray(p, dtype=np.float64)
    lo, hi = bounds.min, bounds.max
    return 2.0 * (p - lo) / (hi - lo) - 1.0


def denormalize_position(pn, bounds: NormalizationBounds) -> np.ndarray:
    pn = np.asarray(pn, dtype=np.float64)
    lo, hi = bounds.min, bounds.max
    return lo + (pn + 1.0) * 0.5 * (hi - lo)


def compute_bounds(positions) -> NormalizationBounds:
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyInput("no positions to compute bounds from")
    return NormalizationBounds(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))
