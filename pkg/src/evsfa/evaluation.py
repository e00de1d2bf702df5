"""Tracking accuracy against ground truth.

Curve times are seconds since each tracker's initialisation, i.e. since the
first sample of its estimated trajectory. Ground truth is linearly
interpolated; estimates are held at their latest sample (the tracker moves
in whole pixels at discrete times).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .events import atomic_write
from .scene import Trajectory, TrajectorySet

__all__ = [
    "Curve",
    "PairingError",
    "interpolate_truth",
    "hold_estimate",
    "accuracy_curve",
    "displacement_curve",
    "export_curve",
    "load_curve",
]


class PairingError(ValueError):
    """Estimate and truth trajectory ids do not correspond."""


@dataclass
class Curve:
    """Samples of a per-time statistic with the number of live trackers behind each."""

    times: np.ndarray
    values: np.ndarray
    n_alive: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.n_alive = np.asarray(self.n_alive, dtype=np.int64)

    def __len__(self):
        return len(self.times)

    def at(self, t):
        """Value at the sample nearest ``t`` seconds."""
        return float(self.values[np.argmin(np.abs(self.times - t))])

    def __eq__(self, other):
        if not isinstance(other, Curve):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.n_alive, other.n_alive)
        )


def interpolate_truth(traj: Trajectory, t):
    """Ground-truth ``(x, y)`` at ``t`` microseconds by linear interpolation."""
    ts = traj.t
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < ts[0]) or np.any(t_arr > ts[-1]):
        raise ValueError(f"time {t} outside trajectory span [{ts[0]}, {ts[-1]}]")
    x = np.interp(t_arr, ts, traj.x)
    y = np.interp(t_arr, ts, traj.y)
    if np.ndim(t) == 0:
        return float(x), float(y)
    return x, y


def hold_estimate(traj: Trajectory, t):
    """Latest estimated position with sample time ``<= t``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    idx = np.searchsorted(traj.t, t_arr, side="right") - 1
    if np.any(idx < 0):
        raise ValueError("query precedes the estimate's first sample")
    return traj.x[idx], traj.y[idx]


def _sample_times(horizon, step):
    n = int(np.floor(horizon / step + 1e-9)) + 1
    return np.round(np.arange(n) * step, 12)


def _errors(estimates: TrajectorySet, truth: TrajectorySet, times):
    """Per-id error arrays (nan where the tracker is not alive)."""
    if set(estimates) != set(truth):
        raise PairingError(
            f"ids differ: only in estimates {sorted(set(estimates) - set(truth))}, "
            f"only in truth {sorted(set(truth) - set(estimates))}"
        )
    ids = sorted(estimates)
    err = np.full((len(ids), len(times)), np.nan)
    for row, tid in enumerate(ids):
        est, gt = estimates[tid], truth[tid]
        t0 = est.t[0]
        abs_t = t0 + times * 1e6
        # alive while the truth still covers t since initialisation
        alive = (gt.t[-1] - t0 >= times * 1e6) & (abs_t >= gt.t[0])
        if not alive.any():
            continue
        gx, gy = interpolate_truth(gt, abs_t[alive])
        ex, ey = hold_estimate(est, abs_t[alive])
        err[row, alive] = np.hypot(gx - ex, gy - ey)
    return err


def accuracy_curve(estimates, truth, radius=7.0, horizon=1.5, step=0.05) -> Curve:
    """Share of live trackers within ``radius`` pixels of the truth, over time.

    Samples where no tracker is alive are left out.
    """
    times = _sample_times(horizon, step)
    err = _errors(estimates, truth, times)
    alive = ~np.isnan(err)
    n_alive = alive.sum(axis=0)
    hits = (alive & (np.nan_to_num(err, nan=np.inf) <= radius)).sum(axis=0)
    keep = n_alive > 0
    return Curve(times[keep], hits[keep] / n_alive[keep], n_alive[keep])


def displacement_curve(estimates, truth, horizon=1.5, step=0.05) -> Curve:
    """Mean Euclidean tracking error over live trackers, over time."""
    times = _sample_times(horizon, step)
    err = _errors(estimates, truth, times)
    alive = ~np.isnan(err)
    n_alive = alive.sum(axis=0)
    keep = n_alive > 0
    total = np.nansum(err, axis=0)
    return Curve(times[keep], total[keep] / n_alive[keep], n_alive[keep])


def encode_curve(curve: Curve) -> bytes:
    buf = io.StringIO()
    buf.write("t,value,n_alive\n")
    for t, v, n in zip(curve.times.tolist(), curve.values.tolist(), curve.n_alive.tolist()):
        buf.write(f"{t!r},{v!r},{n}\n")
    return buf.getvalue().encode()


def export_curve(curve: Curve, path):
    """Write ``t,value,n_alive`` rows under a header."""
    atomic_write(path, encode_curve(curve))


def load_curve(path) -> Curve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = [r for r in rows[1:] if r]
    if not body:
        return Curve(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))
    t, v, n = zip(*body)
    return Curve([float(x) for x in t], [float(x) for x in v], [int(x) for x in n])
