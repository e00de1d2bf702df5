"""Synthetic event scenes with ground-truth feature-point trajectories.

A binary shape is posed on the sensor by a piecewise-linear path of
(x, y, scale, angle) control points. The shape's occupancy is sampled at
pixel centres on a fine time grid and every pixel whose occupancy flips
between two consecutive samples emits an event (see ``SceneSpec`` for
area-sampled intensity with several contrast levels). Pixel ``(x, y)`` has
its centre at integer coordinates ``(x, y)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .events import EventStream, atomic_write

__all__ = [
    "ControlPoint",
    "SceneSpec",
    "Trajectory",
    "TrajectorySet",
    "PATTERNS",
    "synthesize_scene",
    "pattern_feature_points",
    "pattern_inside",
    "pose_at",
    "load_trajectories",
    "write_trajectories",
]

PATTERNS = ("edge", "corner", "square", "grid", "blob")


@dataclass(frozen=True)
class ControlPoint:
    t: float
    x: float
    y: float
    scale: float = 1.0
    angle: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    """Description of one synthetic recording.

    ``size`` is the pattern's characteristic half-extent in pixels at unit
    scale. ``polarity`` is the polarity of events emitted where the shape
    appears; disappearing pixels get the opposite flag.

    With ``supersample = s > 1`` a pixel's intensity is the shape's coverage
    of an ``s x s`` grid of sub-samples and one event is emitted per crossing
    of any of ``levels`` equally spaced contrast thresholds, so a full edge
    crossing yields ``levels`` events spread over the crossing time. The
    default (1, 1) is plain binary occupancy: one event per crossing.
    """

    pattern: str
    path: tuple
    duration: int
    width: int = 128
    height: int = 128
    size: float = 12.0
    polarity: int = 1
    noise_rate: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0
    max_step_px: float = 0.2
    supersample: int = 1
    levels: int = 1

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        path = tuple(p if isinstance(p, ControlPoint) else ControlPoint(*p) for p in self.path)
        object.__setattr__(self, "path", path)
        if not path:
            raise ValueError("path needs at least one control point")
        times = [p.t for p in path]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("control-point times must strictly increase")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.noise_rate < 0 or self.jitter_sigma < 0:
            raise ValueError("noise_rate and jitter_sigma must be non-negative")
        if self.polarity not in (0, 1):
            raise ValueError("polarity must be 0 or 1")
        if self.supersample < 1 or self.levels < 1:
            raise ValueError("supersample and levels must be at least 1")


@dataclass
class Trajectory:
    """Time-ordered ``(x, y, t)`` samples of one point, stored as an ``(n, 3)`` array."""

    id: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 3)

    @property
    def x(self):
        return self.samples[:, 0]

    @property
    def y(self):
        return self.samples[:, 1]

    @property
    def t(self):
        return self.samples[:, 2]

    def __len__(self):
        return len(self.samples)


class TrajectorySet(dict):
    """Mapping of trajectory id to :class:`Trajectory`."""

    @classmethod
    def of(cls, trajectories: Sequence[Trajectory]):
        return cls((tr.id, tr) for tr in trajectories)


# ---------------------------------------------------------------------------
# shapes in local (u, v) coordinates


def _checker_cell(s):
    return s * 2.0 / 3.0


def pattern_inside(pattern, u, v, size):
    """Occupancy of ``pattern`` at local coordinates (unit scale, no rotation)."""
    s = size
    if pattern == "edge":
        return (u <= 0) & (np.abs(v) <= s)
    if pattern == "corner":
        return (u >= 0) & (v >= 0) & (u <= 2 * s) & (v <= 2 * s)
    if pattern == "square":
        return (np.abs(u) <= s) & (np.abs(v) <= s)
    if pattern == "grid":
        c = _checker_cell(s)
        iu = np.floor((u + s) / c)
        iv = np.floor((v + s) / c)
        inside = (np.abs(u) <= s) & (np.abs(v) <= s)
        return inside & ((iu + iv) % 2 == 0)
    if pattern == "blob":
        # an "L": vertical stroke plus a foot
        stem = (u >= -s) & (u <= -s / 3) & (np.abs(v) <= s)
        foot = (u >= -s) & (u <= s) & (v >= s / 3) & (v <= s)
        return stem | foot
    raise ValueError(pattern)


def pattern_feature_points(pattern, size):
    """Corners/junctions of ``pattern`` in local coordinates, shape ``(k, 2)``."""
    s = size
    if pattern == "edge":
        pts = [(0, -s), (0, s)]
    elif pattern == "corner":
        pts = [(0, 0)]
    elif pattern == "square":
        pts = [(-s, -s), (s, -s), (s, s), (-s, s)]
    elif pattern == "grid":
        c = _checker_cell(s)
        pts = [(-s + i * c, -s + j * c) for j in range(4) for i in range(4)]
    elif pattern == "blob":
        pts = [(-s, -s), (-s / 3, -s), (-s / 3, s / 3), (s, s / 3), (s, s), (-s, s)]
    else:
        raise ValueError(pattern)
    return np.array(pts, dtype=float)


def pose_at(path, t):
    """Interpolated ``(x, y, scale, angle)`` at time(s) ``t``; held beyond the ends."""
    t = np.asarray(t, dtype=float)
    times = np.array([p.t for p in path], dtype=float)
    cols = [np.array([getattr(p, k) for p in path], dtype=float) for k in ("x", "y", "scale", "angle")]
    return tuple(np.interp(t, times, c) for c in cols)


def _to_world(local, pose):
    x, y, scale, angle = pose
    c, s = np.cos(angle), np.sin(angle)
    u, v = local[..., 0], local[..., 1]
    return x + scale * (c * u - s * v), y + scale * (s * u + c * v)


def _occupancy(spec, pose, px, py):
    x, y, scale, angle = pose
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = (px - x) / scale, (py - y) / scale
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return pattern_inside(spec.pattern, u, v, spec.size)


RENDER_PERIOD = 25000


def _render_times(spec):
    """Uniform sample times fine enough that no boundary point moves more than ``max_step_px``.

    The spacing divides ``RENDER_PERIOD`` (25 ms), so a scene and its copy
    delayed by any multiple of 25 ms are sampled at corresponding instants.
    """
    path = spec.path
    knots = sorted({0.0, float(spec.duration), *(p.t for p in path if 0 < p.t < spec.duration)})
    reach = _reach(spec) or spec.size * 4
    speed = 0.0  # fastest boundary motion, px/us
    for a, b in zip(knots, knots[1:]):
        pa = pose_at(path, a)
        pb = pose_at(path, b)
        shift = math.hypot(float(pb[0] - pa[0]), float(pb[1] - pa[1]))
        shift += abs(float(pb[2] - pa[2])) * reach
        shift += abs(float(pb[3] - pa[3])) * reach * max(float(pa[2]), float(pb[2]))
        speed = max(speed, shift / (b - a))
    if speed == 0:
        return np.array([0.0, float(spec.duration)])
    step = spec.max_step_px / (spec.supersample * speed)
    step = RENDER_PERIOD / math.ceil(RENDER_PERIOD / step)
    times = np.arange(int(math.floor(spec.duration / step)) + 1) * step
    if times[-1] < spec.duration:
        times = np.append(times, float(spec.duration))
    return times


def _reach(spec):
    """Farthest shape point from the pose origin at unit scale; ``None`` if unbounded."""
    s = spec.size
    if spec.pattern == "edge":
        return None
    if spec.pattern == "corner":
        return 2 * s * math.sqrt(2)
    return s * math.sqrt(2)


def _level(spec, pose, px, py):
    """Quantised intensity level (0..levels) of each pixel centre in ``px, py``."""
    ss = spec.supersample
    if ss == 1:
        return _occupancy(spec, pose, px, py).astype(np.int64) * spec.levels
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    sub_x = (px[..., None, None] + offs[None, :]).astype(float)
    sub_y = (py[..., None, None] + offs[:, None]).astype(float)
    cover = _occupancy(spec, pose, sub_x, sub_y).mean(axis=(-2, -1))
    return np.floor(cover * spec.levels + 1e-9).astype(np.int64)


def _window(spec, poses):
    """Pixel bounds ``(x0, x1, y0, y1)`` covering the shape in all given poses."""
    reach = _reach(spec)
    if reach is None:
        return 0, spec.width, 0, spec.height
    xs = [float(p[0]) for p in poses]
    ys = [float(p[1]) for p in poses]
    r = reach * max(float(p[2]) for p in poses) + 2
    x0 = max(0, int(math.floor(min(xs) - r)))
    x1 = min(spec.width, int(math.ceil(max(xs) + r)) + 1)
    y0 = max(0, int(math.floor(min(ys) - r)))
    y1 = min(spec.height, int(math.ceil(max(ys) + r)) + 1)
    return x0, x1, y0, y1


def synthesize_scene(spec: SceneSpec):
    """Render ``spec`` to an event stream plus ground-truth feature trajectories.

    Returns
    -------
    stream : EventStream
    truth : TrajectorySet
        One trajectory per feature point of the pattern, sampled every
        millisecond and at every control point. Points may leave the sensor;
        their trajectories are still reported.
    """
    rng = np.random.default_rng(spec.seed)
    W, H = spec.width, spec.height
    times = _render_times(spec)
    poses = [pose_at(spec.path, t) for t in times]

    xs, ys, ts, ps = [], [], [], []
    cache = (None, None)
    for i in range(1, len(times)):
        # only pixels the shape touches in either pose can change
        win = _window(spec, poses[i - 1 : i + 1])
        x0, x1, y0, y1 = win
        if x1 <= x0 or y1 <= y0:
            continue
        py, px = np.mgrid[y0:y1, x0:x1]
        prev = cache[1] if cache[0] == win else _level(spec, poses[i - 1], px, py)
        cur = _level(spec, poses[i], px, py)
        cache = (win, cur)
        diff = cur - prev
        if not diff.any():
            continue
        yy, xx = np.nonzero(diff)
        d = diff[yy, xx]
        n = np.abs(d)
        xs.append(np.repeat(xx + x0, n))
        ys.append(np.repeat(yy + y0, n))
        ts.append(np.full(int(n.sum()), 0.5 * (times[i - 1] + times[i])))
        ps.append(np.repeat(np.where(d > 0, spec.polarity, 1 - spec.polarity), n))

    if xs:
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        t = np.concatenate(ts)
        p = np.concatenate(ps)
    else:
        x = y = np.zeros(0, dtype=np.int64)
        t = np.zeros(0)
        p = np.zeros(0, dtype=np.uint8)
    if spec.jitter_sigma > 0 and len(t):
        t = t + rng.normal(0.0, spec.jitter_sigma, size=len(t))

    if spec.noise_rate > 0:
        n_noise = rng.poisson(spec.noise_rate * W * H * spec.duration * 1e-6)
        x = np.concatenate([x, rng.integers(0, W, n_noise)])
        y = np.concatenate([y, rng.integers(0, H, n_noise)])
        t = np.concatenate([t, rng.uniform(0, spec.duration, n_noise)])
        p = np.concatenate([p, rng.integers(0, 2, n_noise)])

    t = np.clip(np.rint(t), 0, spec.duration).astype(np.int64)
    stream = EventStream.from_arrays(x, y, t, p.astype(np.uint8), width=W, height=H)
    return stream, scene_truth(spec)


def scene_truth(spec: SceneSpec, step=1000):
    """Ground-truth trajectories of the pattern's feature points."""
    grid = np.arange(0, spec.duration + 1, step, dtype=float)
    knots = [p.t for p in spec.path if 0 <= p.t <= spec.duration]
    t = np.unique(np.concatenate([grid, knots, [float(spec.duration)]]))
    pose = pose_at(spec.path, t)
    local = pattern_feature_points(spec.pattern, spec.size)
    out = TrajectorySet()
    for i, pt in enumerate(local):
        wx, wy = _to_world(pt[None, :], pose)
        out[i] = Trajectory(i, np.column_stack([wx, wy, t]))
    return out


# ---------------------------------------------------------------------------
# trajectory CSV


def encode_trajectories(trajs: TrajectorySet) -> bytes:
    buf = io.StringIO()
    buf.write("id,x,y,t\n")
    for tid in sorted(trajs):
        for x, y, t in trajs[tid].samples.tolist():
            buf.write(f"{tid},{x!r},{y!r},{t!r}\n")
    return buf.getvalue().encode()


def write_trajectories(trajs: TrajectorySet, path):
    """Write trajectories as ``id,x,y,t`` lines under a header."""
    atomic_write(path, encode_trajectories(trajs))


def load_trajectories(path) -> TrajectorySet:
    rows = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip() == "id"):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected id,x,y,t")
            try:
                tid = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed row {row!r}") from None
            rows.setdefault(tid, []).append(vals)
    return TrajectorySet((tid, Trajectory(tid, np.array(v))) for tid, v in rows.items())
