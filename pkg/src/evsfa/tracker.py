"""Single-pixel-step feature point tracking with a stopping criterion.

Each iteration scores every displacement ``(dx, dy, dt)`` of a
:class:`~evsfa.matching.DisplacementSet` against the tracker's current
position, picks the best one, and moves there only if every candidate box
holds more than ``N0`` events; otherwise the tracker keeps its pixel and
only advances in time.
"""

from __future__ import annotations

import numpy as np

from .events import EventStream
from .matching import DisplacementSet, dissimilarity
from .scene import Trajectory
from .subspace import BasisStateError, ProjectionBasis, extract_feature
from .voxel import BoxSpec, ShapeError, box_count, box_offsets

__all__ = [
    "NEVER",
    "track_point",
    "track_point_ts",
    "time_surface_feature",
    "time_surface_dissimilarity",
]

NEVER = -np.inf


def _run(stream, p0, dset, count_box, N0, k, score, *, count_rule="min", t_end=None, tid=0):
    x, y, t = (int(v) for v in p0[:3])
    if not (0 <= x < stream.width and 0 <= y < stream.height):
        raise ValueError(f"initial position ({x}, {y}) outside the sensor")
    if count_rule not in ("min", "best"):
        raise ValueError("count_rule must be 'min' or 'best'")
    # an empty stream has no span to run past; it only ever holds position
    last = int(stream.t[-1]) if len(stream) else None
    samples = [(x, y, t)]
    for _ in range(int(k) - 1):
        if t_end is not None and t >= t_end:
            break
        cands = [c for c in dset.candidates() if last is None or t + c[2] <= last]
        if not cands:
            break
        scores = score(x, y, t, cands)
        best = 0
        for i in range(1, len(cands)):
            if scores[i] < scores[best]:
                best = i
        dx, dy, dt = cands[best]
        if count_rule == "min":
            n_events = min(box_count(stream, (x + cx, y + cy, t + ct), count_box) for cx, cy, ct in cands)
        else:
            n_events = box_count(stream, (x + dx, y + dy, t + dt), count_box)
        if n_events <= N0:
            dx = dy = 0
        nx, ny, nt = x + dx, y + dy, t + dt
        if not (0 <= nx < stream.width and 0 <= ny < stream.height):
            break
        x, y, t = nx, ny, nt
        samples.append((x, y, t))
    return Trajectory(tid, np.array(samples, dtype=float))


def track_point(
    stream: EventStream,
    p0,
    basis: ProjectionBasis,
    dset: DisplacementSet,
    spec: BoxSpec,
    N0: int = 5,
    k: int = 100,
    *,
    reference_window: str = "fixed",
    count_rule: str = "min",
    t_end=None,
    tid: int = 0,
) -> Trajectory:
    """Track the point ``p0 = (x, y, t)`` for up to ``k`` samples.

    The current position is described over ``T / (1 + r)`` and each
    candidate ``p + (dx, dy, dt)`` over ``dt / (1 + r)``; with
    ``reference_window="stretched"`` the current position uses
    ``dt / (1 + r)`` as well. ``count_rule="min"`` applies the stopping test
    to the emptiest candidate box, ``"best"`` to the chosen one. Tracking
    ends early when the next position leaves the sensor, no candidate time
    lies within the stream, or ``t_end`` is reached.
    """
    if not basis.smoothed:
        raise BasisStateError("tracking needs a smoothed basis")
    if basis.dims != spec.dims:
        raise ShapeError(f"basis dims {basis.dims} do not match box {spec.dims}")
    if reference_window not in ("fixed", "stretched"):
        raise ValueError("reference_window must be 'fixed' or 'stretched'")
    ref_box = spec.with_window(dset.window(spec.T))
    boxes = {dt: spec.with_window(dset.window(dt)) for dt in dset.temporal}

    def score(x, y, t, cands):
        refs = {}
        out = []
        for cx, cy, ct in cands:
            key = ct if reference_window == "stretched" else None
            if key not in refs:
                box = boxes[ct] if key is not None else ref_box
                refs[key] = extract_feature(stream, (x, y, t), basis, box)
            f = extract_feature(stream, (x + cx, y + cy, t + ct), basis, boxes[ct])
            out.append(dissimilarity(refs[key], f))
        return out

    return _run(stream, p0, dset, ref_box, N0, k, score, count_rule=count_rule, t_end=t_end, tid=tid)


# ---------------------------------------------------------------------------
# time-surface baseline


def time_surface_feature(stream: EventStream, center, a: int = 10, lookback=None):
    """Latest event time at each pixel of the ``a x a`` window, up to ``center.t``.

    Pixels without an event carry :data:`NEVER`. ``lookback`` (us) limits how
    far back the search goes; ``None`` scans the whole history.
    """
    cx, cy, ct = center
    lo_t = -np.inf if lookback is None else ct - lookback
    lo, hi = stream.time_slice(lo_t, ct, lo_open=False)
    off_lo, off_hi = box_offsets(a)
    dx = stream.x[lo:hi] - cx
    dy = stream.y[lo:hi] - cy
    mask = (dx >= off_lo) & (dx <= off_hi) & (dy >= off_lo) & (dy <= off_hi)
    grid = np.full((a, a), NEVER)
    # events are time-sorted, so the last write per pixel is the latest
    grid[dx[mask] - off_lo, dy[mask] - off_lo] = stream.t[lo:hi][mask]
    return grid


def time_surface_dissimilarity(ts_ref, ts_cand, tau=50000.0) -> float:
    """Sum of squared differences of exponentially decayed time surfaces.

    ``ts_ref`` and ``ts_cand`` are ``(grid, query_time)`` pairs.
    """
    g0, t0 = ts_ref
    g1, t1 = ts_cand
    g0 = np.asarray(g0, dtype=float)
    g1 = np.asarray(g1, dtype=float)
    if g0.shape != g1.shape:
        raise ShapeError(f"time-surface shapes differ: {g0.shape} vs {g1.shape}")
    e0 = np.exp(-(t0 - g0) / tau)
    e1 = np.exp(-(t1 - g1) / tau)
    return float(np.sum((e0 - e1) ** 2))


def track_point_ts(
    stream: EventStream,
    p0,
    dset: DisplacementSet,
    a: int = 10,
    tau: float = 50000.0,
    N0: int = 5,
    k: int = 100,
    *,
    T: float = 100000,
    lookback=None,
    count_rule: str = "min",
    t_end=None,
    tid: int = 0,
) -> Trajectory:
    """:func:`track_point` with time surfaces in place of projected features.

    ``T`` only sets the box used by the stopping test. ``lookback`` defaults
    to ``20 * tau``, beyond which a decayed entry is below ``3e-9``.
    """
    lookback = 20 * tau if lookback is None else lookback
    count_box = BoxSpec(a, dset.window(T), 1)

    def score(x, y, t, cands):
        ref = (time_surface_feature(stream, (x, y, t), a, lookback), t)
        return [
            time_surface_dissimilarity(
                ref,
                (time_surface_feature(stream, (x + cx, y + cy, t + ct), a, lookback), t + ct),
                tau,
            )
            for cx, cy, ct in cands
        ]

    return _run(stream, p0, dset, count_box, N0, k, score, count_rule=count_rule, t_end=t_end, tid=tid)
