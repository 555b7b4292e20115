import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from icpsnet.errors import ImageFormatError, InvalidIntrinsics, OriginOutsideBox, PoseOutsideScene, ZeroDirection
from icpsnet.geometry import NormalizationBounds, Pose, yaw_pitch_quat
from icpsnet.render import (FACE_AXES, GRADIENT_SLOPE, CameraIntrinsics, appearance, camera_rays,
                            intersect_room_box, procedural_texture, quantize, read_ppm, render, to_unit_range,
                            write_ppm)
from icpsnet.rng import numpy_rng
from icpsnet.scenes import default_scenes

GOLDEN = Path(__file__).parent / "golden" / "render_sha256.txt"
SCENES = default_scenes()
BOX = NormalizationBounds((-1.0, 0.0, 0.5), (4.0, 3.0, 3.0))


def relative_pose(scene, frac, yaw, pitch):
    b = scene.bounds
    return Pose(b.min + np.asarray(frac) * b.extent, yaw_pitch_quat(yaw, pitch))


def random_relative_poses(rng, n):
    for _ in range(n):
        yield rng.uniform(0.15, 0.85, 3), rng.uniform(0, 360), rng.uniform(-20, 20)


def golden_cases():
    rng = numpy_rng(2024)
    cases = []
    for k, scene in enumerate(SCENES):
        frac, yaw, pitch = next(random_relative_poses(rng, 1))
        cases.append((f"{scene.name}", scene, relative_pose(scene, frac, yaw, pitch)))
    return cases


# --- ray/box intersection -----------------------------------------------------------------

def brute_force_hit(origin, d, b):
    best, best_t = None, math.inf
    for face in range(6):
        axis, side = face // 2, face % 2
        plane = b.hi[axis] if side else b.lo[axis]
        if d[axis] == 0:
            continue
        t = (plane - origin[axis]) / d[axis]
        if t <= 0:
            continue
        p = origin + t * d
        others = [k for k in range(3) if k != axis]
        if all(b.lo[k] - 1e-9 <= p[k] <= b.hi[k] + 1e-9 for k in others) and t < best_t - 1e-12:
            best, best_t = face, t
    return best, best_t


def test_center_ray_plus_x_hits_max_x_face_center():
    face, hit = intersect_room_box(BOX.center, [1.0, 0, 0], BOX)
    assert face == 1
    np.testing.assert_allclose(hit, [4.0, 1.5, 1.75], atol=1e-12)


def test_corner_diagonal_uses_lowest_face_id():
    b = NormalizationBounds((0, 0, 0), (2, 2, 2))
    face, hit = intersect_room_box([1, 1, 1], [1, 1, 1], b)
    assert face == 1
    face, _ = intersect_room_box([1, 1, 1], [-1, -1, -1], b)
    assert face == 0
    face, _ = intersect_room_box([1, 1, 1], [0, 1, 1], b)
    assert face == 3


def test_ten_thousand_rays_match_brute_force():
    rng = numpy_rng(77)
    for _ in range(10000):
        o = BOX.min + rng.uniform(0.01, 0.99, 3) * BOX.extent
        d = rng.normal(size=3)
        face, hit = intersect_room_box(o, d, BOX)
        ref_face, ref_t = brute_force_hit(o, d, BOX)
        assert face == ref_face
        axis = face // 2
        plane = BOX.hi[axis] if face % 2 else BOX.lo[axis]
        assert abs(hit[axis] - plane) <= 1e-9
        np.testing.assert_allclose(hit, o + ref_t * d, atol=1e-9)


def test_intersection_errors():
    with pytest.raises(ZeroDirection):
        intersect_room_box(BOX.center, [0, 0, 0], BOX)
    with pytest.raises(OriginOutsideBox):
        intersect_room_box([10, 1, 1], [1, 0, 0], BOX)
    with pytest.raises(OriginOutsideBox):
        intersect_room_box([-1.0, 1, 1], [1, 0, 0], BOX)


# --- texture ------------------------------------------------------------------------------

def test_texture_deterministic():
    s = SCENES[0]
    p = [0.0, 1.3, 2.2]
    assert np.array_equal(procedural_texture(0, p, s.appearance_seed, s.bounds),
                          procedural_texture(0, p, s.appearance_seed, s.bounds))


def test_face_base_colors_distinct_for_default_seeds():
    for s in SCENES:
        base = appearance(s.appearance_seed).base
        for i in range(6):
            for j in range(i + 1, 6):
                assert np.max(np.abs(base[i] - base[j])) >= 16


def test_gradient_slope_along_face_axes():
    s = SCENES[2]
    b = s.bounds
    app = appearance(s.appearance_seed)
    for face in range(6):
        axis_u, axis_v = FACE_AXES[face]
        fixed = b.hi[face // 2] if face % 2 else b.lo[face // 2]
        p = np.empty(3)
        p[face // 2] = fixed
        p[axis_u] = b.lo[axis_u] + 0.3 * b.extent[axis_u]
        p[axis_v] = b.lo[axis_v] + 0.4 * b.extent[axis_v]
        q = p.copy()
        q[axis_u] += 0.1 * b.extent[axis_u]

        def checker(pt):
            u, v = pt[axis_u] - b.lo[axis_u], pt[axis_v] - b.lo[axis_v]
            return app.checker_amp * (1 if (math.floor(u / app.cell) + math.floor(v / app.cell)) % 2 == 0 else -1)

        delta = procedural_texture(face, q, s.appearance_seed, b) - procedural_texture(face, p, s.appearance_seed, b)
        expected = 0.1 * GRADIENT_SLOPE * app.axis_u[face] + (checker(q) - checker(p))
        np.testing.assert_allclose(delta, expected, atol=1e-9)


def test_texture_face_id_range():
    with pytest.raises(ValueError):
        procedural_texture(6, [0, 0, 0], 1, BOX)


# --- quantization and rays ----------------------------------------------------------------

def test_quantize_rounds_half_away_from_zero_and_clamps():
    out = quantize(np.array([0.5, 1.5, 2.49, 254.5, -3.0, 300.0, 0.0]))
    assert out.tolist() == [1, 2, 2, 255, 0, 255, 0]
    assert out.dtype == np.uint8


def test_camera_rays_geometry():
    rays = camera_rays(CameraIntrinsics(90.0), 4, 2)
    assert rays.shape == (8, 3)
    np.testing.assert_allclose(rays[:, 2], -1.0)
    # pixel centers are symmetric about the optical axis
    np.testing.assert_allclose(rays[:, :2].sum(axis=0), 0.0, atol=1e-12)
    assert rays[0, 0] < 0 and rays[0, 1] > 0  # first pixel is top-left
    assert abs(rays[3, 0] - 0.75) < 1e-12      # tan(45 deg) * (1 - 1/4)


# --- render -------------------------------------------------------------------------------

def test_render_shape_and_determinism():
    s = SCENES[4]
    pose = relative_pose(s, [0.4, 0.6, 0.5], 33.0, 5.0)
    a, b = render(s, pose), render(s, pose)
    assert a.dtype == np.uint8 and a.shape == (32, 32, 3)
    assert len(a.tobytes()) == 3072
    assert a.tobytes() == b.tobytes()


def test_render_rejects_bad_inputs():
    s = SCENES[0]
    good = relative_pose(s, [0.5, 0.5, 0.5], 0, 0)
    with pytest.raises(PoseOutsideScene):
        render(s, Pose(s.bounds.max + 1.0, good.orientation))
    with pytest.raises(InvalidIntrinsics):
        render(s, good, CameraIntrinsics(170.0))
    with pytest.raises(InvalidIntrinsics):
        render(s, good, CameraIntrinsics(10.0))


def test_render_non_square_size():
    s = SCENES[1]
    img = render(s, relative_pose(s, [0.5, 0.5, 0.5], 10, 0), width=40, height=24)
    assert img.shape == (24, 40, 3)


def _mean_abs(a, b):
    return float(np.mean(np.abs(a.astype(np.int16) - b.astype(np.int16))))


def test_scene_separability_same_relative_pose():
    rng = numpy_rng(100)
    diffs = []
    for k, (frac, yaw, pitch) in enumerate(random_relative_poses(rng, 100)):
        s1, s2 = SCENES[k % 9], SCENES[(k + 1 + k // 9) % 9]
        if s1.id == s2.id:
            s2 = SCENES[(k + 1) % 9]
        diffs.append(_mean_abs(render(s1, relative_pose(s1, frac, yaw, pitch)),
                               render(s2, relative_pose(s2, frac, yaw, pitch))))
    assert np.mean(diffs) > 10


def _offset_pair(rng, scene):
    b = scene.bounds
    diag = float(np.linalg.norm(b.extent))
    while True:
        f1, f2 = rng.uniform(0.15, 0.85, 3), rng.uniform(0.15, 0.85, 3)
        if np.linalg.norm((f2 - f1) * b.extent) >= 0.1 * diag:
            return f1, f2


def test_pose_sensitivity_within_scene():
    rng = numpy_rng(101)
    diffs = []
    for k in range(100):
        s = SCENES[k % 9]
        f1, f2 = _offset_pair(rng, s)
        yaw, pitch = rng.uniform(0, 360), rng.uniform(-20, 20)
        diffs.append(_mean_abs(render(s, relative_pose(s, f1, yaw, pitch)), render(s, relative_pose(s, f2, yaw, pitch))))
    assert np.mean(diffs) >= 5


def test_inter_scene_difference_exceeds_intra_scene_at_equal_offsets():
    rng = numpy_rng(102)
    inter, intra = [], []
    for k in range(60):
        s, other = SCENES[k % 9], SCENES[(k + 4) % 9]
        f1, f2 = _offset_pair(rng, s)
        yaw, pitch = rng.uniform(0, 360), rng.uniform(-20, 20)
        ref = render(s, relative_pose(s, f1, yaw, pitch))
        intra.append(_mean_abs(ref, render(s, relative_pose(s, f2, yaw, pitch))))
        inter.append(_mean_abs(ref, render(other, relative_pose(other, f2, yaw, pitch))))
    assert np.mean(inter) > np.mean(intra)


def test_golden_image_hashes():
    lines = dict(line.split() for line in GOLDEN.read_text().splitlines() if line.strip())
    cases = golden_cases()
    assert sorted(lines) == sorted(name.replace(" ", "_") for name, _, _ in cases)
    for name, scene, pose in cases:
        digest = hashlib.sha256(render(scene, pose).tobytes()).hexdigest()
        assert digest == lines[name.replace(" ", "_")], name


# --- image files --------------------------------------------------------------------------

def test_ppm_round_trip(tmp_path):
    img = render(SCENES[3], relative_pose(SCENES[3], [0.3, 0.3, 0.5], 200, -10))
    write_ppm(tmp_path / "a.ppm", img)
    raw = (tmp_path / "a.ppm").read_bytes()
    assert raw.startswith(b"P6\n32 32\n255\n") and len(raw) == 13 + 3072
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)


def test_ppm_with_comment_header(tmp_path):
    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n3 2\n255\n" + img.tobytes())
    assert np.array_equal(read_ppm(tmp_path / "c.ppm"), img)


@pytest.mark.parametrize("data", [b"", b"P5\n1 1\n255\n\x00", b"P6\n2 2\n255\n\x00\x01", b"P6\n1 1\n65535\n\x00" * 2,
                                  b"P6\nx y\n255\n"])
def test_corrupt_ppm_rejected(tmp_path, data):
    (tmp_path / "bad.ppm").write_bytes(data)
    with pytest.raises(ImageFormatError):
        read_ppm(tmp_path / "bad.ppm")


def test_write_ppm_rejects_float_images(tmp_path):
    with pytest.raises(ImageFormatError):
        write_ppm(tmp_path / "x.ppm", np.zeros((2, 2, 3)))


def test_unit_range_preprocessing():
    out = to_unit_range(np.array([[0, 255, 51]], dtype=np.uint8))
    np.testing.assert_array_equal(out, [[0.0, 1.0, 0.2]])
