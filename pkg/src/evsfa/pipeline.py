"""Training and evaluation stages composed from the library modules.

``train`` runs: noise filter -> sample smoothed count vectors -> PCA ->
smooth PCA weights -> match extraction -> SFA (and reversed SFA) -> smooth
SFA weights. ``track_all`` and ``evaluate`` drive the tracker and the
accuracy metrics over a set of initial points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .evaluation import accuracy_curve, displacement_curve
from .events import EventStream, filter_noise
from .matching import DIAGONAL, EIGHT_NEIGHBOURS, DisplacementSet, Matches, extract_all_matches
from .scene import ControlPoint, SceneSpec, Trajectory, TrajectorySet
from .subspace import ProjectionBasis, fit_pca, fit_sfa, smooth_basis, smooth_vectors
from .tracker import track_point, track_point_ts
from .voxel import BoxSpec, gaussian_kernel, sparse_counts

__all__ = [
    "PipelineConfig",
    "TrainResult",
    "scene_spec",
    "initial_points",
    "sample_count_vectors",
    "train",
    "track_all",
    "evaluate",
]

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Flat set of pipeline parameters; every field is also a config-file key."""

    # paths
    events: str = "events.csv"
    filtered: str = "filtered.csv"
    truth: str = "truth.csv"
    init_points: str = "init.csv"
    out_dir: str = "."
    basis: str = ""
    trajectories: str = "trajectories.csv"
    estimates: str = "trajectories.csv"
    # box and smoothing
    a: int = 10
    M: int = 25
    T: int = 100000
    sigma_x: float = 3.0
    sigma_y: float = 3.0
    sigma_t: float = 3.0
    # learning
    variance_fraction: float = 0.95
    n_pca: int = 10
    n_pca_track: int = 150
    n_sfa: int = 150
    ridge: float = 1e-8
    max_samples: int = 50000
    max_matches: int = 20000
    # displacement set
    dts: tuple = (25000, 50000, 100000, 200000)
    r: float = 0.5
    spatial: str = "diagonal"
    # filter
    filter_half_width: int = 2
    filter_window: int = 30000
    # tracking
    N0: int = 5
    k: int = 1000
    reference_window: str = "fixed"
    count_rule: str = "min"
    tau: float = 50000.0
    # evaluation
    horizon: float = 1.5
    radius: float = 7.0
    step: float = 0.05
    # export
    index_start: int = 0
    index_stop: int = 16
    # synthetic scene
    pattern: str = "square"
    width: int = 128
    height: int = 128
    size: float = 12.0
    x0: float = 50.0
    y0: float = 50.0
    vx: float = 10.0
    vy: float = 10.0
    scale_rate: float = 0.0
    angular_rate: float = 0.0
    control_points: str = ""
    duration: int = 1900000
    noise_rate: float = 0.0
    jitter_sigma: float = 0.0
    polarity: int = 1
    supersample: int = 4
    levels: int = 4
    init_time: int = 200000
    track_duration: float = 1.55
    seed: int = 0

    @property
    def box(self) -> BoxSpec:
        return BoxSpec(self.a, self.T, self.M)

    @property
    def sigma(self):
        return (self.sigma_x, self.sigma_y, self.sigma_t)

    @property
    def kernel(self):
        return gaussian_kernel(*self.sigma)

    @property
    def dset(self) -> DisplacementSet:
        spatial = {"diagonal": DIAGONAL, "eight": EIGHT_NEIGHBOURS}[self.spatial]
        return DisplacementSet(spatial, tuple(self.dts), self.r)

    @classmethod
    def keys(cls):
        return {f.name: f for f in fields(cls)}


def parse_control_points(text):
    """Parse ``"t x y [scale [angle]]; ..."`` into control points."""
    out = []
    for chunk in text.split(";"):
        vals = chunk.replace(",", " ").split()
        if not vals:
            continue
        if not 3 <= len(vals) <= 5:
            raise ValueError(f"control point {chunk.strip()!r} needs 3 to 5 numbers")
        out.append(ControlPoint(*(float(v) for v in vals)))
    return tuple(out)


def scene_spec(cfg: PipelineConfig) -> SceneSpec:
    """Synthetic scene described by ``cfg``.

    ``control_points`` wins when set; otherwise the pattern moves linearly
    from ``(x0, y0)`` at ``(vx, vy)`` px/s while its scale and angle change
    at ``scale_rate`` /s and ``angular_rate`` rad/s.
    """
    if cfg.control_points.strip():
        path = parse_control_points(cfg.control_points)
    else:
        s = cfg.duration * 1e-6
        path = (
            ControlPoint(0.0, cfg.x0, cfg.y0, 1.0, 0.0),
            ControlPoint(
                float(cfg.duration),
                cfg.x0 + cfg.vx * s,
                cfg.y0 + cfg.vy * s,
                1.0 + cfg.scale_rate * s,
                cfg.angular_rate * s,
            ),
        )
    return SceneSpec(
        cfg.pattern,
        path,
        int(cfg.duration),
        width=cfg.width,
        height=cfg.height,
        size=cfg.size,
        polarity=cfg.polarity,
        noise_rate=cfg.noise_rate,
        jitter_sigma=cfg.jitter_sigma,
        seed=cfg.seed,
        supersample=cfg.supersample,
        levels=cfg.levels,
    )


def initial_points(truth: TrajectorySet, t0, width, height, ids=None) -> TrajectorySet:
    """Ground-truth positions at ``t0`` as one-sample trajectories.

    Points whose truth does not cover ``t0`` or that lie off the sensor are
    left out.
    """
    out = TrajectorySet()
    for tid in sorted(truth) if ids is None else ids:
        tr = truth[tid]
        if not tr.t[0] <= t0 <= tr.t[-1]:
            continue
        x = float(np.interp(t0, tr.t, tr.x))
        y = float(np.interp(t0, tr.t, tr.y))
        if 0 <= round(x) < width and 0 <= round(y) < height:
            out[tid] = Trajectory(tid, np.array([[x, y, float(t0)]]))
    return out


@dataclass
class TrainResult:
    pca: ProjectionBasis
    pca_smoothed: ProjectionBasis
    matches: Matches
    sfa: ProjectionBasis
    sfa_smoothed: ProjectionBasis
    sfa_reversed_smoothed: ProjectionBasis
    pca_track_smoothed: ProjectionBasis
    filtered: EventStream = field(repr=False)

    def bases(self):
        return {
            "pca": self.pca,
            "pca_smoothed": self.pca_smoothed,
            "sfa": self.sfa,
            "sfa_smoothed": self.sfa_smoothed,
            "sfa_reversed_smoothed": self.sfa_reversed_smoothed,
            "pca_track_smoothed": self.pca_track_smoothed,
        }


def sample_count_vectors(stream: EventStream, spec: BoxSpec, max_samples=50000):
    """Raw count vectors at every k-th event, k chosen so at most ``max_samples`` remain."""
    n = len(stream)
    every = max(1, math.ceil(n / max_samples)) if n else 1
    idx = np.arange(0, n, every)
    out = np.zeros((len(idx), spec.d))
    for row, i in enumerate(idx):
        flat, cnt = sparse_counts(stream, (stream.x[i], stream.y[i], stream.t[i]), spec)
        out[row, flat] = cnt
    return out


def _pairs_arrays(pairs):
    return np.array([p.pc for p in pairs]), np.array([p.pc_prime for p in pairs])


def train(stream: EventStream, cfg: PipelineConfig, *, filtered=False) -> TrainResult:
    """Learn PCA and SFA bases from ``stream``."""
    spec, kernel = cfg.box, cfg.kernel
    if not filtered:
        stream = filter_noise(stream, cfg.filter_half_width, cfg.filter_window)
    log.info("training on %d events", len(stream))
    raw = sample_count_vectors(stream, spec, cfg.max_samples)
    smooth = smooth_vectors(raw, spec.dims, kernel)
    raw_mean = raw.mean(axis=0)
    pca = fit_pca(smooth, cfg.variance_fraction, k_max=cfg.n_pca, dims=spec.dims)
    pca_s = smooth_basis(pca, kernel, raw_mean)
    pca_track = fit_pca(smooth, 1.0, k_max=cfg.n_pca_track, dims=spec.dims)
    pca_track_s = smooth_basis(pca_track, kernel, raw_mean)
    log.info("pca: %d components for matching", len(pca))

    n = len(stream)
    every = max(1, math.ceil(n / cfg.max_matches)) if n else 1
    matches = extract_all_matches(stream, pca_s, cfg.dset, spec, every=every, seed=cfg.seed)
    log.info("%d matches (%d skipped)", len(matches.pairs), matches.skipped)
    if len(matches.pairs) < 2:
        raise ValueError("too few matches to fit slow features")

    # every match is binned over its own stretched window but shares the grid
    P, Q = _pairs_arrays(matches.pairs)
    Ps = smooth_vectors(P, spec.dims, kernel)
    Qs = smooth_vectors(Q, spec.dims, kernel)
    n_sfa = min(cfg.n_sfa, spec.d)
    sfa = fit_sfa((Ps, Qs), n_sfa, cfg.ridge, dims=spec.dims)
    rev = fit_sfa((Ps, Qs), n_sfa, cfg.ridge, dims=spec.dims, reverse=True)
    pc_mean = P.mean(axis=0)
    return TrainResult(
        pca=pca,
        pca_smoothed=pca_s,
        matches=matches,
        sfa=sfa,
        sfa_smoothed=smooth_basis(sfa, kernel, pc_mean),
        sfa_reversed_smoothed=smooth_basis(rev, kernel, pc_mean),
        pca_track_smoothed=pca_track_s,
        filtered=stream,
    )


def track_all(stream, init: TrajectorySet, cfg: PipelineConfig, basis=None, *, t_end_after=None):
    """Track every initial point; ``basis=None`` selects the time-surface tracker.

    ``init`` maps ids to trajectories whose first sample is the start point.
    Tracking stops ``t_end_after`` seconds after each start when given.
    """
    out = TrajectorySet()
    for tid in sorted(init):
        x, y, t = init[tid].samples[0]
        p0 = (int(round(x)), int(round(y)), int(round(t)))
        if not (0 <= p0[0] < stream.width and 0 <= p0[1] < stream.height):
            continue
        t_end = None if t_end_after is None else p0[2] + t_end_after * 1e6
        if basis is None:
            traj = track_point_ts(
                stream, p0, cfg.dset, cfg.a, cfg.tau, cfg.N0, cfg.k,
                T=cfg.T, count_rule=cfg.count_rule, t_end=t_end, tid=tid,
            )
        else:
            traj = track_point(
                stream, p0, basis, cfg.dset, cfg.box, cfg.N0, cfg.k,
                reference_window=cfg.reference_window, count_rule=cfg.count_rule,
                t_end=t_end, tid=tid,
            )
        out[tid] = traj
    return out


def evaluate(estimates: TrajectorySet, truth: TrajectorySet, cfg: PipelineConfig):
    """Accuracy and mean-displacement curves for estimates with matching truth ids."""
    truth = TrajectorySet((tid, truth[tid]) for tid in estimates)
    acc = accuracy_curve(estimates, truth, cfg.radius, cfg.horizon, cfg.step)
    dist = displacement_curve(estimates, truth, cfg.horizon, cfg.step)
    return acc, dist
