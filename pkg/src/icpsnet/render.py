"""Pinhole raycaster for procedurally textured box rooms, plus PPM image IO.

Face ids: 0 = x-min wall, 1 = x-max wall, 2 = y-min wall, 3 = y-max wall,
4 = floor, 5 = ceiling. A ray that reaches several faces at the same
distance (edges and corners) reports the lowest face id.

Texture of a face at in-plane coordinates (u, v), both measured in meters
from the face's lower corner, with fractions ``fu = u / extent_u``::

    rgb = base[face] + checker_amp * (+1 if (floor(u/cell)+floor(v/cell)) even else -1)
          + GRADIENT_SLOPE * (fu * axis_u[face] + fv * axis_v[face])

``axis_u``/``axis_v`` are unit RGB directions, so moving 10% of the face
extent along u adds ``0.1 * GRADIENT_SLOPE`` to one channel. The checker
edges are the only discontinuities. Output is clamped to [0, 255] and
rounded half away from zero.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ImageFormatError, InvalidIntrinsics, OriginOutsideBox, PoseOutsideScene, ZeroDirection
from .geometry import NormalizationBounds, Pose, quat_to_matrix
from .rng import SplitMix64
from .scenes import SceneSpec

GRADIENT_SLOPE = 60.0
MIN_FACE_DISTANCE = 48.0
# in-plane world axes (u, v) for each face
FACE_AXES = ((1, 2), (1, 2), (0, 2), (0, 2), (0, 1), (0, 1))


@dataclass(frozen=True)
class CameraIntrinsics:
    hfov_deg: float = 60.0

    def validate(self) -> None:
        if not 10.0 < self.hfov_deg < 170.0:
            raise InvalidIntrinsics(f"horizontal field of view must lie in (10, 170), got {self.hfov_deg}")


@dataclass(frozen=True)
class Appearance:
    base: np.ndarray       # (6, 3) base colors, 8-bit scale
    axis_u: np.ndarray     # (6, 3)
    axis_v: np.ndarray     # (6, 3)
    cell: float            # checker cell size, meters
    checker_amp: float


@lru_cache(maxsize=64)
def appearance(seed: int) -> Appearance:
    """Seed-derived face colors and pattern parameters.

    Each face draws an independent HSV color; a draw is rejected until it
    differs from every earlier face of the room by at least
    ``MIN_FACE_DISTANCE`` in some channel.
    """
    rng = SplitMix64(seed)
    base = np.empty((6, 3))
    for f in range(6):
        while True:
            hue, sat, val = rng.uniform(), 0.5 + 0.4 * rng.uniform(), 0.4 + 0.35 * rng.uniform()
            rgb = 255.0 * np.array(colorsys.hsv_to_rgb(hue, sat, val))
            if all(np.max(np.abs(rgb - base[g])) >= MIN_FACE_DISTANCE for g in range(f)):
                break
        base[f] = rgb
    eye = np.eye(3)
    axis_u = np.array([eye[f % 3] for f in range(6)])
    axis_v = np.array([eye[(f + 1) % 3] for f in range(6)])
    cell = 0.5 + 0.5 * rng.uniform()
    amp = 10.0 + 6.0 * rng.uniform()
    return Appearance(base, axis_u, axis_v, cell, amp)


def _face_hits(origin: np.ndarray, dirs: np.ndarray, bounds: NormalizationBounds):
    lo, hi = bounds.min, bounds.max
    n = dirs.shape[0]
    t = np.full((n, 6), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            d = dirs[:, k]
            t[:, 2 * k] = np.where(d < 0.0, (lo[k] - origin[k]) / d, np.inf)
            t[:, 2 * k + 1] = np.where(d > 0.0, (hi[k] - origin[k]) / d, np.inf)
    face = np.argmin(t, axis=1)  # first minimum = lowest face id
    tmin = t[np.arange(n), face]
    hit = origin[None, :] + tmin[:, None] * dirs
    planes = np.where(face % 2 == 0, lo[face // 2], hi[face // 2])
    hit[np.arange(n), face // 2] = planes
    # the other coordinates may overshoot the box by rounding
    hit = np.clip(hit, lo, hi)
    hit[np.arange(n), face // 2] = planes
    return face, hit


def intersect_room_box(origin, direction, bounds: NormalizationBounds) -> tuple[int, np.ndarray]:
    """Nearest interior face hit by a ray from inside the box."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if not np.any(direction != 0.0):
        raise ZeroDirection("ray direction is zero")
    if not bounds.contains(origin, strict=True):
        raise OriginOutsideBox(f"ray origin {origin} is not strictly inside the box")
    face, hit = _face_hits(origin, direction[None, :], bounds)
    return int(face[0]), hit[0]


def _texture(face: np.ndarray, hit: np.ndarray, bounds: NormalizationBounds, app: Appearance) -> np.ndarray:
    lo, ext = bounds.min, bounds.extent
    axes = np.array(FACE_AXES)[face]
    rows = np.arange(face.shape[0])
    u = hit[rows, axes[:, 0]] - lo[axes[:, 0]]
    v = hit[rows, axes[:, 1]] - lo[axes[:, 1]]
    fu = u / ext[axes[:, 0]]
    fv = v / ext[axes[:, 1]]
    parity = (np.floor(u / app.cell) + np.floor(v / app.cell)) % 2
    checker = np.where(parity == 0, 1.0, -1.0)
    return (app.base[face] + app.checker_amp * checker[:, None]
            + GRADIENT_SLOPE * (fu[:, None] * app.axis_u[face] + fv[:, None] * app.axis_v[face]))


def procedural_texture(face_id: int, hit_point, appearance_seed: int,
                       bounds: NormalizationBounds) -> np.ndarray:
    """Unquantized RGB (8-bit scale) of one face point."""
    if not 0 <= face_id <= 5:
        raise ValueError(f"face id must be in 0..5, got {face_id}")
    hit = np.asarray(hit_point, dtype=np.float64)[None, :]
    return _texture(np.array([face_id]), hit, bounds, appearance(appearance_seed))[0]


def quantize(rgb: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero (all values are nonnegative after clamping)."""
    return np.floor(np.clip(rgb, 0.0, 255.0) + 0.5).astype(np.uint8)


def camera_rays(intrinsics: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Camera-frame directions through pixel centers, row-major, shape (height*width, 3)."""
    tx = np.tan(np.radians(intrinsics.hfov_deg) / 2.0)
    ty = tx * height / width
    cols = (2.0 * (np.arange(width) + 0.5) / width - 1.0) * tx
    rows = (1.0 - 2.0 * (np.arange(height) + 0.5) / height) * ty
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), -np.ones(width * height)], axis=1)


def render(scene: SceneSpec, pose: Pose, intrinsics: CameraIntrinsics = CameraIntrinsics(),
           width: int = 32, height: int = 32) -> np.ndarray:
    """Render a (height, width, 3) uint8 image of ``scene`` seen from ``pose``."""
    intrinsics.validate()
    if int(width) != width or int(height) != height or width < 1 or height < 1:
        raise InvalidIntrinsics(f"image size must be positive integers, got {width}x{height}")
    pos = np.asarray(pose.position, dtype=np.float64)
    if not scene.bounds.contains(pos, strict=True):
        raise PoseOutsideScene(f"camera position {pos} is outside scene {scene.name!r}")
    q = np.asarray(pose.orientation, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise PoseOutsideScene("camera orientation is not a unit quaternion")
    dirs = camera_rays(intrinsics, width, height) @ quat_to_matrix(q).T
    face, hit = _face_hits(pos, dirs, scene.bounds)
    rgb = _texture(face, hit, scene.bounds, appearance(scene.appearance_seed))
    return quantize(rgb).reshape(height, width, 3)


def to_unit_range(images: np.ndarray) -> np.ndarray:
    """Network preprocessing: 8-bit channels scaled to [0, 1] as float64."""
    return np.asarray(images, dtype=np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError("PPM output needs a (h, w, 3) uint8 array")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    try:
        while len(tokens) < 4:
            while data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                while data[pos:pos + 1] not in (b"\n", b""):
                    pos += 1
                continue
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        pos += 1
        if tokens[0] != b"P6":
            raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
        w, h, maxval = (int(t) for t in tokens[1:])
    except (IndexError, ValueError) as exc:
        raise ImageFormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise ImageFormatError(f"{path}: unsupported PPM geometry or maxval")
    body = data[pos:pos + w * h * 3]
    if len(body) != w * h * 3:
        raise ImageFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()
