import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from icpsnet.errors import DegenerateBounds, InvalidConfig, UnknownScene, ZeroTangent
from icpsnet.geometry import (NormalizationBounds, camera_forward, quat_angular_error_deg, quat_multiply,
                              quat_to_matrix)
from icpsnet.scenes import default_scenes
from icpsnet.trajectories import (CompositionTable, TrajectoryConfig, TrajectoryStyle, cell_seed,
                                  expand_composition, full_composition, sample_trajectory, style_orientation)

ROOM = NormalizationBounds((0.0, 0.0, 0.0), (7.0, 5.0, 3.2))
S = TrajectoryStyle


def axis_angle_quat(axis, deg):
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    h = math.radians(deg) / 2
    return np.concatenate([[math.cos(h)], math.sin(h) * a])


def positions(poses):
    return np.array([p.position for p in poses])


def yaw_of(q):
    f = camera_forward(q)
    return math.degrees(math.atan2(f[1], f[0]))


def test_nine_styles_in_order():
    assert [s.name for s in TrajectoryStyle] == [
        "Seq1RectForward", "Seq2RectBackward", "Seq3TrapForward", "Seq4TrapBackward", "Seq5StraightRotate",
        "Seq6CentralCircleRotate", "Seq7ZSpiral", "Seq8ZSemicircular", "Seq9Random"]
    assert [s.column for s in TrajectoryStyle] == [f"seq{i}" for i in range(1, 10)]


@pytest.mark.parametrize("style", list(TrajectoryStyle))
def test_thousand_samples_inside_margin_unit_and_canonical(style):
    cfg = TrajectoryConfig(1000, wall_margin=0.5, seed=9)
    poses = sample_trajectory(style, ROOM, cfg)
    assert len(poses) == 1000
    inner = ROOM.shrink(0.5)
    assert all(inner.contains(p.position, strict=True) for p in poses)
    q = np.array([p.orientation for p in poses])
    assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0)) < 1e-9
    assert np.all(q[:, 0] >= 0.0)


@pytest.mark.parametrize("style", list(TrajectoryStyle))
def test_identical_inputs_give_identical_output(style):
    cfg = TrajectoryConfig(25, seed=123)
    a, b = sample_trajectory(style, ROOM, cfg), sample_trajectory(style, ROOM, cfg)
    assert np.array_equal([p.as_vector() for p in a], [p.as_vector() for p in b])


def test_seed_changes_only_random_style():
    for style in TrajectoryStyle:
        a = sample_trajectory(style, ROOM, TrajectoryConfig(16, seed=1))
        b = sample_trajectory(style, ROOM, TrajectoryConfig(16, seed=2))
        same = np.array_equal([p.as_vector() for p in a], [p.as_vector() for p in b])
        assert same == (style != S.Seq9Random)


def test_random_style_seed_42_twice_bitwise():
    a = sample_trajectory(S.Seq9Random, ROOM, TrajectoryConfig(50, seed=42))
    b = sample_trajectory(S.Seq9Random, ROOM, TrajectoryConfig(50, seed=42))
    assert np.array([p.as_vector() for p in a]).tobytes() == np.array([p.as_vector() for p in b]).tobytes()


def test_random_style_ranges():
    poses = sample_trajectory(S.Seq9Random, ROOM, TrajectoryConfig(2000, seed=5))
    fwd = np.array([camera_forward(p.orientation) for p in poses])
    pitch = np.degrees(np.arcsin(np.clip(fwd[:, 2], -1, 1)))
    assert pitch.min() >= -20 - 1e-9 and pitch.max() <= 20 + 1e-9
    assert pitch.min() < -18 and pitch.max() > 18
    # zero roll: the camera's right axis stays horizontal
    right = np.array([quat_to_matrix(p.orientation)[:, 0] for p in poses])
    assert np.max(np.abs(right[:, 2])) < 1e-9
    yaw = np.degrees(np.arctan2(fwd[:, 1], fwd[:, 0])) % 360
    assert np.histogram(yaw, bins=4, range=(0, 360))[0].min() > 400


def test_central_circle_equidistant_and_outward():
    poses = sample_trajectory(S.Seq6CentralCircleRotate, ROOM, TrajectoryConfig(36))
    pts = positions(poses)
    r = np.hypot(pts[:, 0] - ROOM.center[0], pts[:, 1] - ROOM.center[1])
    assert np.max(np.abs(r - r[0])) <= 1e-9
    assert abs(r[0] - 0.25 * 5.0) < 1e-12
    for p in poses:
        out = p.position - ROOM.center
        out[2] = 0
        np.testing.assert_allclose(camera_forward(p.orientation), out / np.linalg.norm(out), atol=1e-9)


def test_spiral_z_non_decreasing_and_spans_margin_range():
    pts = positions(sample_trajectory(S.Seq7ZSpiral, ROOM, TrajectoryConfig(40, wall_margin=0.4)))
    assert np.all(np.diff(pts[:, 2]) >= 0)
    assert pts[0, 2] > 0.4 and pts[-1, 2] < 3.2 - 0.4
    assert pts[-1, 2] - pts[0, 2] > 0.9 * (3.2 - 0.8)


def test_semicircle_in_xz_plane_facing_center():
    poses = sample_trajectory(S.Seq8ZSemicircular, ROOM, TrajectoryConfig(20))
    pts = positions(poses)
    assert np.all(pts[:, 1] == ROOM.center[1])
    for p in poses:
        d = ROOM.center - p.position
        np.testing.assert_allclose(camera_forward(p.orientation), d / np.linalg.norm(d), atol=1e-9)
    # x sweeps one way across the room: a half circle, not a full one
    assert np.all(np.diff(pts[:, 0]) < 0)


def test_straight_rotate_yaw_steps_and_midline():
    n = 24
    poses = sample_trajectory(S.Seq5StraightRotate, ROOM, TrajectoryConfig(n))
    pts = positions(poses)
    assert np.all(pts[:, 1] == ROOM.center[1])  # x is the long axis of this room
    yaws = np.array([yaw_of(p.orientation) for p in poses])
    steps = (np.diff(yaws) + 360.0) % 360.0
    np.testing.assert_allclose(steps, 360.0 / n, atol=1e-9)
    assert abs(yaws[0]) < 1e-9


def test_rectangle_styles_trace_perimeter_with_tangent_facing():
    poses = sample_trajectory(S.Seq1RectForward, ROOM, TrajectoryConfig(40))
    back = sample_trajectory(S.Seq2RectBackward, ROOM, TrajectoryConfig(40))
    pts = positions(poses)
    np.testing.assert_array_equal(pts, positions(back))
    assert np.ptp(pts[:, 2]) == 0.0 and pts[0, 2] == 0.5 * 3.2
    # each step moves along the facing direction (up to corner turns)
    moves = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    fwd = np.array([camera_forward(p.orientation) for p in poses])
    along = np.sum(moves * fwd, axis=1) / np.linalg.norm(moves, axis=1)
    assert np.mean(along > 0.99) > 0.8
    errs = [quat_angular_error_deg(a.orientation, b.orientation) for a, b in zip(poses, back)]
    np.testing.assert_allclose(errs, 180.0, atol=1e-6)


def test_trapezoid_far_edge_is_half_width():
    pts = positions(sample_trajectory(S.Seq3TrapForward, ROOM, TrajectoryConfig(200)))
    near = pts[np.isclose(pts[:, 1], pts[:, 1].min())]
    far = pts[np.isclose(pts[:, 1], pts[:, 1].max())]
    assert abs(np.ptp(far[:, 0]) / np.ptp(near[:, 0]) - 0.5) < 0.05


def test_forward_tangent_plus_x_matches_axis_angle_construction():
    # oracle: +90 deg about x brings camera -Z to world +Y and camera +Y to +Z; -90 deg about z then turns +Y to +X
    expected = quat_multiply(axis_angle_quat([0, 0, 1], -90), axis_angle_quat([1, 0, 0], 90))
    q = style_orientation(S.Seq1RectForward, [1, 1, 1], [1, 0, 0], ROOM)
    assert quat_angular_error_deg(q, expected) < 1e-9
    np.testing.assert_allclose(camera_forward(q), [1, 0, 0], atol=1e-12)


def test_backward_faces_opposite_forward():
    f = style_orientation(S.Seq3TrapForward, [1, 1, 1], [0.3, 0.7, 0], ROOM)
    b = style_orientation(S.Seq4TrapBackward, [1, 1, 1], [0.3, 0.7, 0], ROOM)
    assert abs(quat_angular_error_deg(f, b) - 180.0) < 1e-6


def test_zero_tangent_rejected():
    with pytest.raises(ZeroTangent):
        style_orientation(S.Seq1RectForward, [1, 1, 1], [0, 0, 0], ROOM)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        sample_trajectory(S.Seq1RectForward, ROOM, TrajectoryConfig(3))
    with pytest.raises(InvalidConfig):
        sample_trajectory(S.Seq1RectForward, ROOM, TrajectoryConfig(10, wall_margin=2.6))
    with pytest.raises(InvalidConfig):
        sample_trajectory(S.Seq1RectForward, ROOM, TrajectoryConfig(10, camera_height_fraction=1.0))
    with pytest.raises(DegenerateBounds):
        sample_trajectory(S.Seq1RectForward, NormalizationBounds((0, 0, 0), (1, 1, 0)), TrajectoryConfig(10))


room_dims = st.tuples(st.floats(3.0, 20.0), st.floats(3.0, 20.0), st.floats(2.5, 6.0))


@given(room_dims, st.sampled_from(list(TrajectoryStyle)), st.integers(4, 60), st.integers(0, 2**64 - 1))
def test_invariants_hold_for_any_room(dims, style, n, seed):
    bounds = NormalizationBounds((-1.0, 2.0, 0.0), (-1.0 + dims[0], 2.0 + dims[1], dims[2]))
    poses = sample_trajectory(style, bounds, TrajectoryConfig(n, wall_margin=0.5, seed=seed))
    assert len(poses) == n
    inner = bounds.shrink(0.5)
    for p in poses:
        assert inner.contains(p.position, strict=True)
        assert abs(np.linalg.norm(p.orientation) - 1.0) < 1e-9
        assert p.orientation[0] >= 0.0


# --- composition tables -------------------------------------------------------------------

def test_full_table_totals():
    t = full_composition()
    assert t.grand_total == 156949
    assert t.count("Armoury", S.Seq1RectForward) == 1739
    assert t.row_total("Serving") == 20594
    assert t.column_total(S.Seq9Random) == 18776
    assert len(t.scene_order) == 9


def test_full_table_names_match_default_scenes():
    assert sorted(full_composition().scene_order) == sorted(s.name for s in default_scenes())


def test_csv_round_trip():
    t = full_composition()
    t2 = CompositionTable.from_csv_text(t.to_csv_text())
    assert t2.counts == t.counts and t2.scene_order == t.scene_order


def test_csv_rejects_bad_header_and_counts():
    with pytest.raises(InvalidConfig):
        CompositionTable.from_csv_text("room,seq1\nA,1\n")
    header = "scene," + ",".join(f"seq{i}" for i in range(1, 10))
    with pytest.raises(InvalidConfig):
        CompositionTable.from_csv_text(header + "\nA,1,2,3,4,5,6,7,8,x\n")
    with pytest.raises(InvalidConfig):
        CompositionTable.from_csv_text(header + "\nA,1,2,3,4,5,6,7,8,-9\n")


def test_format_table_lists_totals():
    text = full_composition().format_table()
    assert "156949" in text.splitlines()[-1]
    assert "Armoury" in text and "1739" in text


def test_desk_expansion_count():
    scenes = default_scenes()
    table = CompositionTable.uniform([s.name for s in scenes], 60)
    cells = expand_composition(scenes, table, TrajectoryConfig(seed=3))
    assert len(cells) == 81
    assert sum(len(p) for _, _, p in cells) == 4860 == table.grand_total


def test_expansion_unknown_scene():
    with pytest.raises(UnknownScene):
        expand_composition(default_scenes(), CompositionTable.uniform(["Attic"], 5), TrajectoryConfig())


def test_cell_seeds_distinct_and_order_independent():
    seeds = {cell_seed(7, sid, st_) for sid in range(9) for st_ in TrajectoryStyle}
    assert len(seeds) == 81
    scenes = default_scenes()
    table = CompositionTable.uniform([s.name for s in scenes], 6)
    cfg = TrajectoryConfig(seed=7)
    sequential = expand_composition(scenes, table, cfg)

    def one(cell):
        scene, style = cell
        return sample_trajectory(style, scene.bounds, cfg.with_count(6, cell_seed(7, scene.id, style)))

    cells = [(s, t) for s in scenes for t in TrajectoryStyle]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(one, reversed(cells)))[::-1]
    for (_, _, a), b in zip(sequential, parallel):
        assert np.array([p.as_vector() for p in a]).tobytes() == np.array([p.as_vector() for p in b]).tobytes()
