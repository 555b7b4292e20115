"""Camera trajectories for the nine movement styles, and composition tables.

Paths live inside the room box shrunk by ``wall_margin``. Rectangular,
trapezoid and straight-line paths use that shrunk rectangle scaled by
``PATH_SCALE`` about its center, so every position is strictly inside.

Style geometry:

* Seq1/Seq2: perimeter of the path rectangle, counter-clockwise, at camera
  height; Seq1 faces along travel, Seq2 against it.
* Seq3/Seq4: as Seq1/Seq2 with the far (max-y) edge narrowed to half width.
* Seq5: the long horizontal mid-line; yaw sweeps 0..360 degrees in steps of 360/n.
* Seq6: circle of radius 0.25 * min(x extent, y extent) around the room
  center at camera height, facing outward.
* Seq7: the Seq6 circle wound twice while z rises linearly through the
  shrunk z range, facing outward.
* Seq8: half circle in the x-z plane at the y mid-line, facing the room center.
* Seq9: uniform positions in the shrunk box, yaw in [0, 360), pitch in
  [-20, 20], zero roll, drawn from SplitMix64(seed).
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, UnknownScene, ZeroTangent
from .geometry import NormalizationBounds, Pose, look_rotation, quat_canonicalize, yaw_pitch_quat
from .rng import SplitMix64, mix_seed
from .scenes import SceneSpec

PATH_SCALE = 0.8
TRAPEZOID_FAR_WIDTH = 0.5
CIRCLE_RADIUS_FRACTION = 0.25
SPIRAL_TURNS = 2
RANDOM_PITCH_DEG = 20.0


class TrajectoryStyle(enum.IntEnum):
    Seq1RectForward = 1
    Seq2RectBackward = 2
    Seq3TrapForward = 3
    Seq4TrapBackward = 4
    Seq5StraightRotate = 5
    Seq6CentralCircleRotate = 6
    Seq7ZSpiral = 7
    Seq8ZSemicircular = 8
    Seq9Random = 9

    @property
    def column(self) -> str:
        return f"seq{self.value}"


FORWARD_STYLES = {TrajectoryStyle.Seq1RectForward, TrajectoryStyle.Seq3TrapForward}
BACKWARD_STYLES = {TrajectoryStyle.Seq2RectBackward, TrajectoryStyle.Seq4TrapBackward}
OUTWARD_STYLES = {TrajectoryStyle.Seq6CentralCircleRotate, TrajectoryStyle.Seq7ZSpiral}


@dataclass(frozen=True)
class TrajectoryConfig:
    sample_count: int = 20
    wall_margin: float = 0.5
    camera_height_fraction: float = 0.5
    seed: int = 0

    def validate(self, bounds: NormalizationBounds | None = None) -> None:
        if int(self.sample_count) != self.sample_count or self.sample_count < 4:
            raise InvalidConfig(f"sample_count must be an integer >= 4, got {self.sample_count}")
        if self.wall_margin < 0:
            raise InvalidConfig("wall_margin must be >= 0")
        if not 0.0 < self.camera_height_fraction < 1.0:
            raise InvalidConfig("camera_height_fraction must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        if bounds is not None:
            ext = bounds.extent
            if self.wall_margin >= CIRCLE_RADIUS_FRACTION * min(ext[0], ext[1]):
                # also implies margin < half the smallest horizontal extent
                raise InvalidConfig("wall_margin too large for the room")
            if self.wall_margin * 2 >= ext[2]:
                raise InvalidConfig("wall_margin leaves no vertical room")
            h = self.camera_height_fraction * ext[2]
            if not self.wall_margin < h < ext[2] - self.wall_margin:
                raise InvalidConfig("camera height falls inside the wall margin")

    def with_count(self, n: int, seed: int | None = None) -> "TrajectoryConfig":
        return TrajectoryConfig(n, self.wall_margin, self.camera_height_fraction,
                                self.seed if seed is None else seed)


def style_orientation(style: TrajectoryStyle, position, path_tangent, bounds: NormalizationBounds,
                      *, yaw_deg: float | None = None, pitch_deg: float = 0.0) -> np.ndarray:
    """Unit canonical camera quaternion for one trajectory sample.

    Tangent-following styles (Seq1-4) use ``path_tangent``; Seq5 and Seq9
    need an explicit ``yaw_deg``; Seq6/7 face away from the room's vertical
    center axis; Seq8 faces the room center.
    """
    style = TrajectoryStyle(style)
    position = np.asarray(position, dtype=np.float64)
    if style in FORWARD_STYLES or style in BACKWARD_STYLES:
        t = np.asarray(path_tangent, dtype=np.float64)
        if np.linalg.norm(t) == 0.0:
            raise ZeroTangent(f"{style.name} needs a nonzero path tangent")
        return look_rotation(t if style in FORWARD_STYLES else -t)
    if style in (TrajectoryStyle.Seq5StraightRotate, TrajectoryStyle.Seq9Random):
        if yaw_deg is None:
            raise InvalidConfig(f"{style.name} needs yaw_deg")
        return yaw_pitch_quat(yaw_deg, pitch_deg)
    if style in OUTWARD_STYLES:
        out = position - bounds.center
        out[2] = 0.0
        if np.linalg.norm(out) == 0.0:
            raise ZeroTangent("position on the room axis has no outward direction")
        return look_rotation(out)
    d = bounds.center - position
    if np.linalg.norm(d) == 0.0:
        raise ZeroTangent("camera at the room center has no facing direction")
    return look_rotation(d)


def _polyline(corners: np.ndarray, n: int):
    """n points uniformly spaced by arc length around a closed polygon, with edge tangents."""
    edges = np.roll(corners, -1, axis=0) - corners
    lengths = np.linalg.norm(edges, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cum[-1]
    pts, tans = [], []
    for i in range(n):
        s = total * i / n
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(edges) - 1)
        frac = (s - cum[k]) / lengths[k]
        pts.append(corners[k] + frac * edges[k])
        tans.append(edges[k] / lengths[k])
    return pts, tans


def sample_trajectory(style: TrajectoryStyle, bounds: NormalizationBounds,
                      cfg: TrajectoryConfig) -> list[Pose]:
    style = TrajectoryStyle(style)
    cfg.validate(bounds)
    n = int(cfg.sample_count)
    inner = bounds.shrink(cfg.wall_margin)
    lo, hi, c = inner.min, inner.max, bounds.center
    half = 0.5 * PATH_SCALE * (hi - lo)
    x0, x1 = c[0] - half[0], c[0] + half[0]
    y0, y1 = c[1] - half[1], c[1] + half[1]
    height = bounds.lo[2] + cfg.camera_height_fraction * bounds.extent[2]

    positions: list[np.ndarray] = []
    quats: list[np.ndarray] = []

    if style in FORWARD_STYLES or style in BACKWARD_STYLES:
        if style in (TrajectoryStyle.Seq1RectForward, TrajectoryStyle.Seq2RectBackward):
            corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        else:
            fh = TRAPEZOID_FAR_WIDTH * half[0]
            corners = [(x0, y0), (x1, y0), (c[0] + fh, y1), (c[0] - fh, y1)]
        pts, tans = _polyline(np.array(corners, dtype=np.float64), n)
        for p, t in zip(pts, tans):
            pos = np.array([p[0], p[1], height])
            positions.append(pos)
            quats.append(style_orientation(style, pos, [t[0], t[1], 0.0], bounds))
    elif style == TrajectoryStyle.Seq5StraightRotate:
        along_x = bounds.extent[0] >= bounds.extent[1]
        for i in range(n):
            s = i / (n - 1)
            pos = (np.array([x0 + s * (x1 - x0), c[1], height]) if along_x
                   else np.array([c[0], y0 + s * (y1 - y0), height]))
            positions.append(pos)
            quats.append(style_orientation(style, pos, None, bounds, yaw_deg=360.0 * i / n))
    elif style in OUTWARD_STYLES:
        radius = CIRCLE_RADIUS_FRACTION * min(bounds.extent[0], bounds.extent[1])
        spiral = style == TrajectoryStyle.Seq7ZSpiral
        for i in range(n):
            turns = SPIRAL_TURNS if spiral else 1
            phi = 2.0 * np.pi * turns * i / n
            z = lo[2] + (hi[2] - lo[2]) * (i + 0.5) / n if spiral else height
            pos = np.array([c[0] + radius * np.cos(phi), c[1] + radius * np.sin(phi), z])
            positions.append(pos)
            quats.append(style_orientation(style, pos, None, bounds))
    elif style == TrajectoryStyle.Seq8ZSemicircular:
        ax = 0.5 * PATH_SCALE * (hi[0] - lo[0])
        hz = hi[2] - lo[2]
        for i in range(n):
            phi = np.pi * (i + 0.5) / n
            pos = np.array([c[0] + ax * np.cos(phi), c[1], lo[2] + hz * (0.1 + 0.8 * np.sin(phi))])
            positions.append(pos)
            quats.append(style_orientation(style, pos, None, bounds))
    else:
        rng = SplitMix64(cfg.seed)
        for _ in range(n):
            pos = np.array([lo[k] + (hi[k] - lo[k]) * rng.uniform() for k in range(3)])
            yaw = 360.0 * rng.uniform()
            pitch = RANDOM_PITCH_DEG * (2.0 * rng.uniform() - 1.0)
            positions.append(pos)
            quats.append(style_orientation(style, pos, None, bounds, yaw_deg=yaw, pitch_deg=pitch))

    return [Pose(p, quat_canonicalize(q)) for p, q in zip(positions, quats)]


class CompositionTable:
    """Sample counts per (scene name, style). Totals are always derived from the cells."""

    def __init__(self, counts: dict[tuple[str, TrajectoryStyle], int], scene_order: list[str] | None = None):
        for key, v in counts.items():
            if int(v) != v or v < 0:
                raise InvalidConfig(f"count for {key} must be a nonnegative integer")
        self.counts = {(s, TrajectoryStyle(t)): int(v) for (s, t), v in counts.items()}
        order = scene_order or []
        for s, _ in self.counts:
            if s not in order:
                order.append(s)
        self.scene_order = order

    @classmethod
    def uniform(cls, scene_names: list[str], count: int) -> "CompositionTable":
        return cls({(s, t): count for s in scene_names for t in TrajectoryStyle}, list(scene_names))

    @classmethod
    def from_csv(cls, path) -> "CompositionTable":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())

    @classmethod
    def from_csv_text(cls, text: str) -> "CompositionTable":
        reader = csv.reader(io.StringIO(text))
        header = [h.strip().lower() for h in next(reader)]
        expected = ["scene"] + [t.column for t in TrajectoryStyle]
        if header != expected:
            raise InvalidConfig(f"composition header must be {','.join(expected)}")
        counts, order = {}, []
        for row in reader:
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(expected):
                raise InvalidConfig(f"malformed composition row: {row}")
            name = row[0].strip()
            order.append(name)
            for t, v in zip(TrajectoryStyle, row[1:]):
                try:
                    counts[(name, t)] = int(v)
                except ValueError:
                    raise InvalidConfig(f"non-integer count {v!r} for {name}/{t.column}") from None
        return cls(counts, order)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene"] + [t.column for t in TrajectoryStyle])
        for s in self.scene_order:
            w.writerow([s] + [self.counts.get((s, t), 0) for t in TrajectoryStyle])
        return buf.getvalue()

    def count(self, scene: str, style: TrajectoryStyle) -> int:
        return self.counts.get((scene, TrajectoryStyle(style)), 0)

    def row_total(self, scene: str) -> int:
        return sum(self.count(scene, t) for t in TrajectoryStyle)

    def column_total(self, style: TrajectoryStyle) -> int:
        return sum(self.count(s, style) for s in self.scene_order)

    @property
    def grand_total(self) -> int:
        return sum(self.counts.values())

    def format_table(self) -> str:
        """Counts laid out like the sample-count table: scenes by rows, styles by columns, with totals."""
        width = max(12, *(len(s) for s in self.scene_order)) + 2
        cols = [t.column.capitalize() for t in TrajectoryStyle] + ["All"]
        lines = ["Scene".ljust(width) + "".join(c.rjust(8) for c in cols)]
        for s in self.scene_order:
            vals = [self.count(s, t) for t in TrajectoryStyle] + [self.row_total(s)]
            lines.append(s.ljust(width) + "".join(str(v).rjust(8) for v in vals))
        vals = [self.column_total(t) for t in TrajectoryStyle] + [self.grand_total]
        lines.append("All".ljust(width) + "".join(str(v).rjust(8) for v in vals))
        return "\n".join(lines)


def cell_seed(root_seed: int, scene_index: int, style: TrajectoryStyle) -> int:
    return mix_seed(root_seed, scene_index, int(style))


def expand_composition(scenes: list[SceneSpec], table: CompositionTable,
                       cfg: TrajectoryConfig) -> list[tuple[int, TrajectoryStyle, list[Pose]]]:
    """One pose list per table cell, in (table row, style) order.

    Cells with a count below 4 cannot form a trajectory; a zero count yields
    an empty list and other small counts are rejected.
    """
    by_name = {s.name: s for s in scenes}
    for name in table.scene_order:
        if name not in by_name:
            raise UnknownScene(name)
    out = []
    for name in table.scene_order:
        scene = by_name[name]
        for style in TrajectoryStyle:
            n = table.count(name, style)
            if n == 0:
                out.append((scene.id, style, []))
                continue
            cell_cfg = cfg.with_count(n, cell_seed(cfg.seed, scene.id, style))
            out.append((scene.id, style, sample_trajectory(style, scene.bounds, cell_cfg)))
    return out


FULL_TABLE_PATH = Path(__file__).with_name("data") / "full_composition.csv"


def full_composition() -> CompositionTable:
    return CompositionTable.from_csv(FULL_TABLE_PATH)
