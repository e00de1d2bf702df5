"""Point-match extraction over a variable temporal displacement space.

For an event at ``(x, y, t)`` every displacement ``(dx, dy, dt)`` of a
:class:`DisplacementSet` is scored by the squared distance between the
features of the box ending at ``(x, y, t)`` and the box ending at
``(x + dx, y + dy, t + dt)``, both stretched over ``dt / (1 + r)``.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .events import EventStream, atomic_write
from .subspace import ProjectionBasis, extract_feature
from .voxel import BoxSpec, ShapeError, sparse_counts

__all__ = [
    "DisplacementSet",
    "MatchPair",
    "Matches",
    "NoCandidateError",
    "dissimilarity",
    "extract_match",
    "extract_all_matches",
    "raw_count_vector",
    "write_matches",
    "load_matches",
]

log = logging.getLogger(__name__)

DIAGONAL = ((-1, -1), (-1, 1), (1, -1), (1, 1))
EIGHT_NEIGHBOURS = tuple((dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0))


class NoCandidateError(ValueError):
    """Every displacement candidate fell off the sensor or past the stream."""


@dataclass(frozen=True)
class DisplacementSet:
    """Spatial moves, candidate time steps (us) and the overlap parameter ``r``."""

    spatial: tuple = DIAGONAL
    temporal: tuple = (25000, 50000, 100000, 200000)
    r: float = 0.5

    def __post_init__(self):
        spatial = tuple(sorted((int(dx), int(dy)) for dx, dy in self.spatial))
        temporal = tuple(int(v) for v in self.temporal)
        if not spatial or not temporal:
            raise ValueError("displacement set must not be empty")
        if any(v <= 0 for v in temporal) or any(b <= a for a, b in zip(temporal, temporal[1:])):
            raise ValueError("temporal displacements must be positive and strictly increasing")
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "temporal", temporal)

    def candidates(self):
        """All ``(dx, dy, dt)`` in tie-break order: smallest dt, then (dx, dy)."""
        return [(dx, dy, dt) for dt in self.temporal for dx, dy in self.spatial]

    def window(self, dt):
        return dt / (1.0 + self.r)


@dataclass
class MatchPair:
    pc: np.ndarray
    pc_prime: np.ndarray
    delta: tuple
    source: tuple
    dissimilarity: float


class Matches(NamedTuple):
    pairs: list
    skipped: int


def dissimilarity(f1, f2) -> float:
    """Squared Euclidean distance between two feature vectors."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.shape != f2.shape:
        raise ShapeError(f"feature shapes differ: {f1.shape} vs {f2.shape}")
    diff = f1 - f2
    return float(diff @ diff)


def raw_count_vector(stream, center, spec: BoxSpec):
    vec = np.zeros(spec.d)
    idx, cnt = sparse_counts(stream, center, spec)
    vec[idx] = cnt
    return vec


def _in_bounds(stream, x, y):
    return 0 <= x < stream.width and 0 <= y < stream.height


def match_scores(stream: EventStream, event, basis: ProjectionBasis, dset: DisplacementSet, spec):
    """Dissimilarity of every admissible candidate, in tie-break order."""
    x, y, t = (int(v) for v in event[:3])
    t_end = stream.t[-1] if len(stream) else -1
    out = []
    for dt in dset.temporal:
        if t + dt > t_end:
            continue
        box = spec.with_window(dset.window(dt))
        ref = None
        for dx, dy in dset.spatial:
            if not _in_bounds(stream, x + dx, y + dy):
                continue
            if ref is None:
                ref = extract_feature(stream, (x, y, t), basis, box)
            cand = extract_feature(stream, (x + dx, y + dy, t + dt), basis, box)
            out.append(((dx, dy, dt), dissimilarity(ref, cand)))
    return out


def extract_match(
    stream: EventStream, event, basis: ProjectionBasis, dset: DisplacementSet, spec: BoxSpec
) -> MatchPair:
    """Best displacement for one event and the raw count vectors it pairs.

    Ties go to the smallest ``dt`` and then the lexicographically smallest
    ``(dx, dy)``. Candidates off the sensor or beyond the last event are
    skipped.
    """
    x, y, t = (int(v) for v in event[:3])
    if not _in_bounds(stream, x, y):
        raise ValueError(f"event ({x}, {y}) outside the sensor")
    scores = match_scores(stream, (x, y, t), basis, dset, spec)
    if not scores:
        raise NoCandidateError(f"no admissible displacement for event ({x}, {y}, {t})")
    best, best_d = scores[0]
    for delta, d in scores[1:]:
        if d < best_d:
            best, best_d = delta, d
    dx, dy, dt = best
    box = spec.with_window(dset.window(dt))
    pc = raw_count_vector(stream, (x, y, t), box)
    pc_prime = raw_count_vector(stream, (x + dx, y + dy, t + dt), box)
    return MatchPair(pc, pc_prime, best, (x, y, t), best_d)


def extract_all_matches(
    stream: EventStream,
    basis: ProjectionBasis,
    dset: DisplacementSet,
    spec: BoxSpec,
    *,
    every: int = 1,
    fraction: float | None = None,
    seed: int = 0,
) -> Matches:
    """Run :func:`extract_match` over sampled events, in event order.

    Sampling takes every ``every``-th event, or, when ``fraction`` is given,
    a seeded Bernoulli subset of that fraction. Events without admissible
    candidates are skipped and counted.
    """
    n = len(stream)
    if fraction is not None:
        rng = np.random.default_rng(seed)
        idx = np.flatnonzero(rng.random(n) < fraction)
    else:
        idx = np.arange(0, n, max(1, int(every)))
    pairs, skipped = [], 0
    for i in idx:
        try:
            pairs.append(extract_match(stream, stream[int(i)], basis, dset, spec))
        except NoCandidateError:
            skipped += 1
    if skipped:
        log.info("skipped %d of %d sampled events without candidates", skipped, len(idx))
    return Matches(pairs, skipped)


# ---------------------------------------------------------------------------
# match-pair file

MATCH_MAGIC = b"MPR1"
_MHEAD = struct.Struct("<4sII")
_MREC = struct.Struct("<HHQbbQ")


def encode_matches(pairs, d=None) -> bytes:
    pairs = list(pairs)
    if d is None:
        d = len(pairs[0].pc) if pairs else 0
    chunks = [_MHEAD.pack(MATCH_MAGIC, d, len(pairs))]
    for mp in pairs:
        if len(mp.pc) != d or len(mp.pc_prime) != d:
            raise ShapeError("all match vectors must have the same length")
        sx, sy, st = mp.source
        dx, dy, dt = mp.delta
        chunks.append(_MREC.pack(sx, sy, st, dx, dy, dt))
        chunks.append(np.asarray(mp.pc, dtype="<f8").tobytes())
        chunks.append(np.asarray(mp.pc_prime, dtype="<f8").tobytes())
    return b"".join(chunks)


def write_matches(pairs, path, d=None):
    """Write pairs as ``MPR1`` binary: header, then per pair source, delta and 2d float64."""
    atomic_write(path, encode_matches(pairs, d))


def load_matches(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MHEAD.size:
        raise ValueError(f"{path}: truncated header")
    magic, d, count = _MHEAD.unpack_from(raw, 0)
    if magic != MATCH_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    rec = _MREC.size + 16 * d
    if len(raw) != _MHEAD.size + count * rec:
        raise ValueError(f"{path}: expected {count} pairs of dimension {d}")
    pairs = []
    off = _MHEAD.size
    for _ in range(count):
        sx, sy, st, dx, dy, dt = _MREC.unpack_from(raw, off)
        vals = np.frombuffer(raw, dtype="<f8", count=2 * d, offset=off + _MREC.size)
        pairs.append(
            MatchPair(vals[:d].copy(), vals[d:].copy(), (dx, dy, dt), (sx, sy, st), float("nan"))
        )
        off += rec
    return pairs
