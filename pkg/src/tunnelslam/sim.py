"""Synthetic tunnel-world generator and lidar scanner.

Worlds are 2.5D: axis-aligned corridor rectangles (plus alcoves) form the
free space, pillars subtract from it, and a flat floor/ceiling close the
volume. Ray casting is analytic, so wall returns satisfy their plane
equations exactly and every derived statistic has a closed-form oracle.

Random streams are split per robot and per scan via ``numpy.random
.SeedSequence`` so datasets are reproducible element by element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import PointCloud, Pose3

_TOL = 1e-9


class UnknownScenario(ValueError):
    pass


class PoseInWall(ValueError):
    pass


# ---------------------------------------------------------------------------
# world model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorridorSegment:
    """Axis-aligned corridor: centerline from start to end, inflated by width/2.

    End caps extend width/2 beyond the endpoints so that L and T junctions
    between touching segments have no interior voids.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    width: float = 4.0
    height: float = 3.0

    def __post_init__(self):
        dx = abs(self.end[0] - self.start[0])
        dy = abs(self.end[1] - self.start[1])
        if dx > _TOL and dy > _TOL:
            raise ValueError("corridor segments must be axis-aligned")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")

    def rect(self) -> tuple[float, float, float, float]:
        h = 0.5 * self.width
        x0 = min(self.start[0], self.end[0]) - h
        x1 = max(self.start[0], self.end[0]) + h
        y0 = min(self.start[1], self.end[1]) - h
        y1 = max(self.start[1], self.end[1]) + h
        return (x0, y0, x1, y1)


@dataclass(frozen=True)
class Pillar:
    """Solid vertical cylinder inside the free space."""

    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class Alcove:
    """Small rectangular recess carved into a wall (extra free space)."""

    center: tuple[float, float]
    size: tuple[float, float]

    def rect(self) -> tuple[float, float, float, float]:
        return (self.center[0] - 0.5 * self.size[0], self.center[1] - 0.5 * self.size[1],
                self.center[0] + 0.5 * self.size[0], self.center[1] + 0.5 * self.size[1])


@dataclass(frozen=True)
class World:
    segments: tuple[CorridorSegment, ...]
    pillars: tuple[Pillar, ...] = ()
    alcoves: tuple[Alcove, ...] = ()

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a world needs at least one corridor segment")
        heights = {s.height for s in self.segments}
        if len(heights) > 1:
            raise ValueError("all segments must share one wall height")

    @property
    def height(self) -> float:
        return self.segments[0].height

    def free_rects(self) -> np.ndarray:
        """(R, 4) array of [x0, y0, x1, y1] free-space rectangles."""
        rects = [s.rect() for s in self.segments] + [a.rect() for a in self.alcoves]
        return np.asarray(rects, dtype=np.float64)

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        rects = self.free_rects()
        inside = np.any((x >= rects[:, 0] + margin) & (x <= rects[:, 2] - margin)
                        & (y >= rects[:, 1] + margin) & (y <= rects[:, 3] - margin))
        if not inside:
            return False
        for p in self.pillars:
            if math.hypot(x - p.center[0], y - p.center[1]) <= p.radius + margin:
                return False
        return True


# ---------------------------------------------------------------------------
# lidar model and scanning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LidarModel:
    """Spinning multi-channel scanner; defaults mirror a 16-channel puck.

    Measurement noise has a range component (``sigma_r``, along the ray) and
    a small isotropic component (``sigma_point``, on the returned point
    vector) standing in for beam-spot and timing jitter; without the
    isotropic term, grazing-incidence returns on flat surfaces would carry
    unrealistically zero surface-normal noise.
    """

    channels: int = 16
    elevation_min_deg: float = -15.0
    elevation_max_deg: float = 15.0
    azimuth_steps: int = 360
    max_range: float = 100.0
    sigma_r: float = 0.01
    sigma_point: float = 0.005

    def directions(self) -> np.ndarray:
        """(channels * azimuth_steps, 3) unit ray directions in the lidar frame."""
        elev = np.deg2rad(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.channels))
        azim = np.arange(self.azimuth_steps) * (2.0 * np.pi / self.azimuth_steps)
        ce, se = np.cos(elev), np.sin(elev)
        ca, sa = np.cos(azim), np.sin(azim)
        dirs = np.empty((self.channels, self.azimuth_steps, 3))
        dirs[:, :, 0] = ce[:, None] * ca[None, :]
        dirs[:, :, 1] = ce[:, None] * sa[None, :]
        dirs[:, :, 2] = se[:, None]
        return dirs.reshape(-1, 3)


def _edges_with_overlaps(rects: np.ndarray):
    """Flattened rect edges plus, per edge, the rects that could swallow a
    crossing (only rects overlapping the edge segment need testing)."""
    edges = []
    for r_idx, rect in enumerate(rects):
        for axis in (0, 1):
            lo_i, hi_i = (1, 3) if axis == 0 else (0, 2)
            for edge_c in (rect[axis], rect[axis + 2]):
                if axis == 0:
                    seg = (edge_c, rect[lo_i], edge_c, rect[hi_i])
                else:
                    seg = (rect[lo_i], edge_c, rect[hi_i], edge_c)
                overlaps = []
                for o_idx, other in enumerate(rects):
                    if o_idx == r_idx:
                        continue
                    if (seg[0] < other[2] - 1e-7 and seg[2] > other[0] + 1e-7
                            and seg[1] < other[3] - 1e-7 and seg[3] > other[1] + 1e-7):
                        overlaps.append(o_idx)
                edges.append((axis, edge_c, rect[lo_i], rect[hi_i], overlaps))
    return edges


def _ray_ranges(world: World, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Exact range to the free-space boundary for each ray; inf when nothing hit."""
    n = dirs.shape[0]
    rects = world.free_rects()
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]

    t_wall = np.full(n, np.inf)
    with np.errstate(invalid="ignore"):
        for axis, edge_c, lo, hi, overlaps in _edges_with_overlaps(rects):
            d_ax = dx if axis == 0 else dy
            d_cr = dy if axis == 0 else dx
            o_ax = ox if axis == 0 else oy
            o_cr = oy if axis == 0 else ox
            safe = np.where(np.abs(d_ax) > _TOL, d_ax, np.nan)
            t = (edge_c - o_ax) / safe
            cross = o_cr + t * d_cr
            ok = (t > _TOL) & (t < t_wall) & (cross >= lo - _TOL) & (cross <= hi + _TOL)
            if not ok.any():
                continue
            # a crossing strictly inside an overlapping rect is an opening
            if overlaps:
                px = np.where(ok, ox + t * dx, np.nan)
                py = np.where(ok, oy + t * dy, np.nan)
                inside = np.zeros(n, dtype=bool)
                for o_idx in overlaps:
                    other = rects[o_idx]
                    inside |= ((px > other[0] + 1e-7) & (px < other[2] - 1e-7)
                               & (py > other[1] + 1e-7) & (py < other[3] - 1e-7))
                ok &= ~inside
            t_wall = np.where(ok, t, t_wall)

    # pillars: first entry into any solid cylinder
    for p in world.pillars:
        cxy = np.array(p.center)
        a = dx * dx + dy * dy
        fx, fy = ox - cxy[0], oy - cxy[1]
        b = 2.0 * (fx * dx + fy * dy)
        c = fx * fx + fy * fy - p.radius * p.radius
        disc = b * b - 4.0 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(np.maximum(disc, 0.0))
            t1 = (-b - root) / (2.0 * a)
        hit = (disc > 0) & (a > _TOL) & (t1 > _TOL)
        t_wall = np.where(hit, np.minimum(t_wall, t1), t_wall)

    # floor z=0 and ceiling z=height close the volume
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = np.where(dz < -_TOL, (0.0 - oz) / dz, np.inf)
        t_ceil = np.where(dz > _TOL, (world.height - oz) / dz, np.inf)
    t_plane = np.minimum(t_floor, t_ceil)
    return np.minimum(t_wall, t_plane)


def scan(world: World, pose: Pose3, model: LidarModel | None = None,
         rng: np.random.Generator | None = None) -> PointCloud:
    """Simulate one scan from ``pose``; returns points in the lidar frame.

    Range noise is Gaussian with ``model.sigma_r``; rays longer than
    ``model.max_range`` produce no return.
    """
    model = model or LidarModel()
    x, y, z = pose.t
    if not world.contains(x, y) or not (0.0 < z < world.height):
        raise PoseInWall(f"lidar pose {pose.t} is not inside free space")
    dirs_l = model.directions()
    dirs_w = dirs_l @ pose.rotation().T
    ranges = _ray_ranges(world, pose.t, dirs_w)
    if model.sigma_r > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        ranges = ranges + rng.normal(0.0, model.sigma_r, size=ranges.shape)
    keep = np.isfinite(ranges) & (ranges <= model.max_range)
    pts = dirs_l[keep] * ranges[keep, None]
    if model.sigma_point > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        pts = pts + rng.normal(0.0, model.sigma_point, size=pts.shape)
    return PointCloud(pts, frame="lidar")


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoints along corridor centerlines plus motion/noise parameters."""

    waypoints: tuple[tuple[float, float], ...]
    speed: float = 1.0                  # m/s
    scan_rate: float = 2.0              # Hz
    sigma_trans: float = 0.0            # odometry noise per step, meters
    sigma_yaw: float = 0.0              # odometry noise per step, radians
    sensor_height: float = 1.0
    max_turn_step: float = math.radians(15.0)

    def __post_init__(self):
        if self.sigma_trans < 0 or self.sigma_yaw < 0:
            raise ValueError("noise sigmas must be non-negative")
        if len(self.waypoints) < 2:
            raise ValueError("need at least two waypoints")


@dataclass(frozen=True)
class TrajectoryResult:
    ground_truth: tuple[Pose3, ...]
    scans: tuple[PointCloud, ...]
    odometry: tuple[Pose3, ...]  # noisy relative increments, len == len(poses) - 1


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def ground_truth_poses(spec: TrajectorySpec) -> list[Pose3]:
    """Interpolate waypoints into per-scan poses (turns rate-limited in yaw)."""
    step = spec.speed / spec.scan_rate
    states: list[tuple[float, float, float]] = []
    wps = [np.asarray(w, dtype=np.float64) for w in spec.waypoints]
    heading = None
    for a, b in zip(wps[:-1], wps[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length < _TOL:
            continue
        seg_heading = math.atan2(seg[1], seg[0])
        if heading is None:
            heading = seg_heading
            states.append((a[0], a[1], heading))
        # rotate in place toward the segment heading
        delta = _wrap_angle(seg_heading - heading)
        n_turn = max(1, math.ceil(abs(delta) / spec.max_turn_step)) if abs(delta) > _TOL else 0
        for k in range(1, n_turn + 1):
            states.append((a[0], a[1], _wrap_angle(heading + delta * k / n_turn)))
        heading = seg_heading
        n_steps = max(1, round(length / step))
        for k in range(1, n_steps + 1):
            p = a + seg * (k / n_steps)
            states.append((p[0], p[1], heading))
    return [Pose3.from_yaw(yaw, (x, y, spec.sensor_height)) for x, y, yaw in states]


def _run_with_seedseq(world: World, spec: TrajectorySpec, ss: np.random.SeedSequence,
                      model: LidarModel | None) -> TrajectoryResult:
    model = model or LidarModel()
    poses = ground_truth_poses(spec)
    ss_odo, ss_scan = ss.spawn(2)
    rng_odo = np.random.default_rng(ss_odo)
    scan_streams = ss_scan.spawn(len(poses))
    scans = [scan(world, p, model, np.random.default_rng(s)) for p, s in zip(poses, scan_streams)]
    odometry = []
    for a, b in zip(poses[:-1], poses[1:]):
        u = a.between(b)
        if spec.sigma_trans > 0 or spec.sigma_yaw > 0:
            noise = Pose3.from_yaw(
                rng_odo.normal(0.0, spec.sigma_yaw) if spec.sigma_yaw > 0 else 0.0,
                (rng_odo.normal(0.0, spec.sigma_trans) if spec.sigma_trans > 0 else 0.0,
                 rng_odo.normal(0.0, spec.sigma_trans) if spec.sigma_trans > 0 else 0.0,
                 0.0))
            u = u.compose(noise)
        odometry.append(u)
    return TrajectoryResult(tuple(poses), tuple(scans), tuple(odometry))


def run_trajectory(world: World, spec: TrajectorySpec, seed: int = 0,
                   model: LidarModel | None = None) -> TrajectoryResult:
    """Ground truth, scans, and noisy odometry increments for one robot."""
    return _run_with_seedseq(world, spec, np.random.SeedSequence(seed), model)


def run_robots(world: World, specs: list[TrajectorySpec], seed: int = 0,
               model: LidarModel | None = None) -> list[TrajectoryResult]:
    """Independent per-robot streams split from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(specs))
    return [_run_with_seedseq(world, s, c, model) for s, c in zip(specs, children)]


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    specs: tuple[TrajectorySpec, ...]   # one per robot


# low tunnel profiles keep floor/ceiling structure inside lidar range
def _corridor(a, b, width=3.2, height=2.2) -> CorridorSegment:
    return CorridorSegment(tuple(a), tuple(b), width, height)


# Alcove free-rects must overlap the corridor rect (shared edges read as
# walls); recess geometry keeps this implicit for scenario builders.
_ALCOVE_LIP = 0.1


def _wall_alcove(seg: CorridorSegment, along: float, side: int,
                 width: float, depth: float) -> Alcove:
    """An alcove recessed into one wall of an axis-aligned segment, ``along``
    meters from the segment start, on ``side`` (+1 left of travel)."""
    a = np.asarray(seg.start)
    d = np.asarray(seg.end) - a
    d = d / np.linalg.norm(d)
    n = np.array([-d[1], d[0]])
    center = a + d * along + n * side * (0.5 * seg.width + 0.5 * depth - 0.5 * _ALCOVE_LIP)
    if abs(d[0]) > 0.5:   # segment runs along x: alcove recesses in y
        return Alcove((float(center[0]), float(center[1])), (width, depth + _ALCOVE_LIP))
    return Alcove((float(center[0]), float(center[1])), (depth + _ALCOVE_LIP, width))


def furnish(seg: CorridorSegment, seed: int, depth_range=(0.12, 0.3),
            width_range=(0.7, 1.5), gap_range=(0.2, 0.5),
            margin: float = 1.5) -> tuple[Alcove, ...]:
    """Deterministic aperiodic wall alcoves along a segment.

    The mix of widths and depths makes each stretch locally distinctive in
    a bird's-eye map image; two segments furnished with the same seed are
    exact copies of each other (the perceptual-aliasing construction).
    """
    rng = np.random.default_rng(seed)
    length = float(np.linalg.norm(np.asarray(seg.end) - np.asarray(seg.start)))
    out = []
    x = margin
    while True:
        w = float(rng.uniform(*width_range))
        d = float(rng.uniform(*depth_range))
        side = 1 if rng.random() < 0.5 else -1
        if x + w > length - margin:
            break
        out.append(_wall_alcove(seg, x + 0.5 * w, side, w, d))
        x += w + float(rng.uniform(*gap_range))
    return tuple(out)


def scenario(name: str) -> Scenario:
    """Canned desk-scale scenes; see SCENARIO_NAMES for valid names."""
    if name == "straight_corridor":
        world = World((_corridor((0, 0), (60, 0), width=4.0),))
        spec = TrajectorySpec(waypoints=((3.0, 0.0), (57.0, 0.0)))
        return Scenario(name, world, (spec,))
    if name == "t_junction":
        main = _corridor((0, 0), (40, 0))
        branch = _corridor((20, 0), (20, 16), width=2.6)
        # the junction mouth itself gets deliberate recesses on both walls
        # so revisit windows there carry enough matchable structure
        mouth = tuple(_wall_alcove(main, x, -1, w, d)
                      for x, w, d in ((15.4, 0.6, 0.3), (16.6, 0.9, 0.4), (18.3, 0.5, 0.25),
                                      (18.95, 0.4, 0.42), (19.8, 1.2, 0.35), (20.9, 0.5, 0.2),
                                      (21.6, 0.6, 0.45), (23.2, 0.9, 0.2), (24.6, 0.5, 0.35)))
        upper = (_wall_alcove(main, 17.5, 1, 0.7, 0.35), _wall_alcove(main, 22.4, 1, 0.8, 0.3))
        throat = (_wall_alcove(branch, 2.6, 1, 0.7, 0.3), _wall_alcove(branch, 3.8, -1, 0.5, 0.4))
        alcoves = furnish(main, seed=11) + furnish(branch, seed=12) + mouth + upper + throat
        world = World((main, branch), alcoves=alcoves)
        spec = TrajectorySpec(waypoints=((3.0, 0.0), (37.0, 0.0)))
        return Scenario(name, world, (spec,))
    if name == "loop_block":
        segs = (
            _corridor((0, 0), (24, 0)),
            _corridor((24, 0), (24, 24)),
            _corridor((24, 24), (0, 24)),
            _corridor((0, 24), (0, 0)),
        )
        # deep recesses: these corridors are meant to stay observable, the
        # aliasing scenario is where shallow (degenerate) furnishing lives
        alcoves = tuple(a for i, s in enumerate(segs)
                        for a in furnish(s, seed=20 + i, depth_range=(0.3, 0.6)))
        # corner zones carry their own distinctive recess clusters so the
        # revisit at the loop's start has matchable structure in-window
        corner = tuple(_wall_alcove(segs[i], along, side, w, d)
                       for i in range(4)
                       for along, side, w, d in ((1.0, -1, 0.9, 0.45), (2.1, -1, 0.5, 0.3),
                                                 (22.6, 1, 0.8, 0.4), (21.4, 1, 0.5, 0.5)))
        world = World(segs, alcoves=alcoves + corner)
        spec = TrajectorySpec(waypoints=((0.0, 0.0), (24.0, 0.0), (24.0, 24.0),
                                         (0.0, 24.0), (0.0, 0.0)))
        return Scenario(name, world, (spec,))
    if name == "aliased_corridors":
        # Two world-space copies of one furnished corridor joined by a
        # connector: identically salient, mutually aliasing. Shallow recesses
        # keep the legs geometrically degenerate along their axis.
        leg_a = _corridor((0, 0), (36, 0))
        leg_b = _corridor((36, 30), (0, 30))
        connector = _corridor((36, 0), (36, 30))
        twin_kw = dict(depth_range=(0.10, 0.18), width_range=(0.4, 1.2),
                       gap_range=(0.3, 0.8))
        alcoves = (furnish(leg_a, seed=30, **twin_kw)
                   + tuple(Alcove((a.center[0], a.center[1] + 30.0), a.size)
                           for a in furnish(leg_a, seed=30, **twin_kw))
                   + furnish(connector, seed=31))
        world = World((leg_a, connector, leg_b), alcoves=alcoves)
        spec = TrajectorySpec(waypoints=((2.0, 0.0), (36.0, 0.0), (36.0, 30.0), (2.0, 30.0)))
        return Scenario(name, world, (spec,))
    if name == "two_robot_overlap":
        main = _corridor((0, 0), (40, 0))
        branch = _corridor((20, 0), (20, 20), width=2.6)
        alcoves = (furnish(main, seed=41, depth_range=(0.3, 0.6))
                   + furnish(branch, seed=42, depth_range=(0.3, 0.6)))
        world = World((main, branch), alcoves=alcoves)
        spec_a = TrajectorySpec(waypoints=((3.0, 0.0), (37.0, 0.0)))
        spec_b = TrajectorySpec(waypoints=((20.0, 17.0), (20.0, 0.0), (37.0, 0.0)))
        return Scenario(name, world, (spec_a, spec_b))
    if name == "office_like":
        segs = (
            _corridor((0, 0), (30, 0)),
            _corridor((30, 0), (30, 20)),
            _corridor((30, 20), (0, 20)),
            _corridor((0, 20), (0, 0)),
            _corridor((15, 0), (15, 20)),
        )
        alcoves = tuple(a for i, s in enumerate(segs) for a in furnish(s, seed=50 + i))
        world = World(segs, pillars=(Pillar((7.5, 1.0), 0.15), Pillar((22.5, 19.0), 0.15)),
                      alcoves=alcoves)
        spec = TrajectorySpec(waypoints=((2.0, 0.0), (28.0, 0.0), (28.0, 18.0),
                                         (2.0, 18.0), (2.0, 0.0)))
        return Scenario(name, world, (spec,))
    raise UnknownScenario(f"unknown scenario {name!r}; valid: {sorted(SCENARIO_NAMES)}")


SCENARIO_NAMES = ("straight_corridor", "t_junction", "loop_block",
                  "aliased_corridors", "two_robot_overlap", "office_like")


# ---------------------------------------------------------------------------
# dataset directory layout
# ---------------------------------------------------------------------------
# scans/<index>.xyz      one "x y z" triple per line, lidar frame
# odometry.txt           per line: tx ty tz qx qy qz qw (relative increments)
# ground_truth.txt       per line: tx ty tz qx qy qz qw (absolute poses)
# meta.txt               key = value lines
# Floats use repr() so a rewrite of the same data is byte-identical.

def _fmt_pose(p: Pose3) -> str:
    q, t = p.q, p.t
    return " ".join(repr(float(v)) for v in (t[0], t[1], t[2], q[1], q[2], q[3], q[0]))


def _parse_pose(line: str) -> Pose3:
    tx, ty, tz, qx, qy, qz, qw = (float(v) for v in line.split())
    return Pose3(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))


def save_dataset(out_dir, result: TrajectoryResult, meta: dict | None = None) -> None:
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for i, cloud in enumerate(result.scans):
        lines = [" ".join(repr(float(v)) for v in row) for row in cloud.points]
        (out / "scans" / f"{i}.xyz").write_text("\n".join(lines) + "\n")
    (out / "ground_truth.txt").write_text(
        "\n".join(_fmt_pose(p) for p in result.ground_truth) + "\n")
    (out / "odometry.txt").write_text(
        "\n".join(_fmt_pose(p) for p in result.odometry) + ("\n" if result.odometry else ""))
    info = {"scan_count": len(result.scans)}
    if meta:
        info.update(meta)
    (out / "meta.txt").write_text(
        "\n".join(f"{k} = {v}" for k, v in sorted(info.items())) + "\n")


@dataclass(frozen=True)
class Dataset:
    scans: tuple[PointCloud, ...]
    odometry: tuple[Pose3, ...]
    ground_truth: tuple[Pose3, ...]
    meta: dict


def load_dataset(path) -> Dataset:
    root = Path(path)
    scan_dir = root / "scans"
    indices = sorted(int(p.stem) for p in scan_dir.glob("*.xyz"))
    scans = []
    for i in indices:
        text = (scan_dir / f"{i}.xyz").read_text().strip()
        pts = (np.array([[float(v) for v in line.split()] for line in text.splitlines()])
               if text else np.zeros((0, 3)))
        scans.append(PointCloud(pts, frame="lidar"))
    gt = [_parse_pose(l) for l in (root / "ground_truth.txt").read_text().splitlines() if l.strip()]
    odo_text = (root / "odometry.txt").read_text()
    odo = [_parse_pose(l) for l in odo_text.splitlines() if l.strip()]
    meta = {}
    for line in (root / "meta.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return Dataset(tuple(scans), tuple(odo), tuple(gt), meta)
