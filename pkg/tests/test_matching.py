import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evsfa.events import EventStream, filter_noise
from evsfa.matching import (
    DIAGONAL,
    DisplacementSet,
    MatchPair,
    NoCandidateError,
    dissimilarity,
    extract_all_matches,
    extract_match,
    load_matches,
    write_matches,
)
from evsfa.pipeline import sample_count_vectors
from evsfa.scene import ControlPoint, SceneSpec, synthesize_scene
from evsfa.subspace import ProjectionBasis, fit_pca, smooth_basis, smooth_vectors
from evsfa.voxel import BoxSpec, ShapeError, gaussian_kernel, spike_count_matrix, vectorize

SPEC = BoxSpec(10, 100000, 25)


def _random_smoothed_basis(seed, n=12, spec=SPEC):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(n, spec.d))
    return ProjectionBasis("pca", spec.dims, w, np.ones(n), np.zeros(spec.d), smoothed=True)


def _shift_invariant_stream(seed, shift=(1, 1), period=50000, copies=12):
    """Random pattern repeated every ``period`` us, moved by ``shift`` each time."""
    rng = np.random.default_rng(seed)
    n = 40
    bx = rng.integers(0, 8, n)
    by = rng.integers(0, 8, n)
    bt = rng.integers(0, period, n)
    xs, ys, ts = [], [], []
    for k in range(copies):
        xs.append(bx + 10 + k * shift[0])
        ys.append(by + 10 + k * shift[1])
        ts.append(bt + k * period)
    return EventStream.from_arrays(
        np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), width=48, height=48
    )


# --- dissimilarity ----------------------------------------------------------


def test_dissimilarity_examples():
    assert dissimilarity([1.0, 2.0], [1.0, 2.0]) == 0
    assert dissimilarity([0, 0], [3, 4]) == 25
    with pytest.raises(ShapeError):
        dissimilarity([1, 2], [1, 2, 3])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.integers(0, 2**31))
def test_dissimilarity_loop_oracle(a, seed):
    b = np.random.default_rng(seed).normal(size=len(a)) * 10
    ref = 0.0
    for u, v in zip(a, b):
        ref += (u - v) ** 2
    assert dissimilarity(a, b) == pytest.approx(ref, rel=1e-12, abs=1e-12)


# --- displacement set -------------------------------------------------------


def test_displacement_set_defaults_and_order():
    d = DisplacementSet()
    assert d.spatial == DIAGONAL
    c = d.candidates()
    assert len(c) == 16 and c[0] == (-1, -1, 25000) and c[-1] == (1, 1, 200000)
    assert d.window(150000) == 100000


def test_displacement_set_validation():
    with pytest.raises(ValueError):
        DisplacementSet(temporal=(50, 50))
    with pytest.raises(ValueError):
        DisplacementSet(temporal=(0, 10))
    with pytest.raises(ValueError):
        DisplacementSet(r=1.0)


def test_window_stretching_scales_bin_width():
    d = DisplacementSet()
    w1 = SPEC.with_window(d.window(50000)).bin_width
    w2 = SPEC.with_window(d.window(100000)).bin_width
    assert w2 == pytest.approx(2 * w1)


# --- extract_match ----------------------------------------------------------


def test_shifted_pattern_found_with_zero_dissimilarity():
    stream = _shift_invariant_stream(0)
    basis = _random_smoothed_basis(1)
    dset = DisplacementSet()
    ev = stream[int(np.searchsorted(stream.t, 300000))]
    m = extract_match(stream, ev, basis, dset, SPEC)
    assert m.delta == (1, 1, 50000)
    assert m.dissimilarity == pytest.approx(0, abs=1e-9)
    assert np.array_equal(m.pc, m.pc_prime) and m.pc.sum() > 0


def test_stationary_pattern_tie_breaks_to_first_candidate():
    # all events lie in the past: every forward feature is empty
    stream = EventStream.from_arrays([20, 21, 22, 20], [20, 20, 21, 21], [0, 10, 20, 1_000_000], width=48, height=48)
    basis = _random_smoothed_basis(2)
    m = extract_match(stream, (20, 20, 500_000), basis, DisplacementSet(), SPEC)
    assert m.delta == (-1, -1, 25000)
    assert m.dissimilarity == 0
    assert not m.pc.any() and not m.pc_prime.any()


def _oracle_best(stream, event, basis, dset, spec):
    x, y, t = event
    best = None
    for dt in dset.temporal:
        if t + dt > stream.t[-1]:
            continue
        box = spec.with_window(dt / (1 + dset.r))
        for dx, dy in dset.spatial:
            if not (0 <= x + dx < stream.width and 0 <= y + dy < stream.height):
                continue
            f0 = basis.weights @ vectorize(spike_count_matrix(stream, (x, y, t), box)) - basis.offset
            f1 = basis.weights @ vectorize(spike_count_matrix(stream, (x + dx, y + dy, t + dt), box)) - basis.offset
            d = float(np.sum((f0 - f1) ** 2))
            if best is None or d < best[1]:
                best = ((dx, dy, dt), d)
    return best


@given(st.integers(0, 2**31))
def test_argmin_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 600
    stream = EventStream.from_arrays(
        rng.integers(0, 24, n), rng.integers(0, 24, n), rng.integers(0, 600000, n), width=24, height=24
    )
    basis = _random_smoothed_basis(seed % 101, n=5)
    dset = DisplacementSet(spatial=((-1, 0), (0, 1), (1, 1), (-1, -1)), temporal=(30000, 90000))
    ev = stream[int(rng.integers(0, n // 2))]
    m = extract_match(stream, ev, basis, dset, SPEC)
    delta, d = _oracle_best(stream, ev[:3], basis, dset, SPEC)
    assert m.delta == delta
    assert m.dissimilarity == pytest.approx(d, rel=1e-9, abs=1e-9)


def test_corner_event_skips_off_sensor_candidates():
    stream = _shift_invariant_stream(3)
    basis = _random_smoothed_basis(4)
    m = extract_match(stream, (0, 0, 100000), basis, DisplacementSet(), SPEC)
    assert m.delta[:2] == (1, 1)


def test_no_candidate_error():
    stream = EventStream.from_arrays([5], [5], [1000], width=10, height=10)
    with pytest.raises(NoCandidateError):
        extract_match(stream, (5, 5, 1000), _random_smoothed_basis(5), DisplacementSet(), SPEC)


# --- extract_all_matches ----------------------------------------------------


def test_all_matches_empty_stream():
    out = extract_all_matches(EventStream.empty(10, 10), _random_smoothed_basis(6), DisplacementSet(), SPEC)
    assert out.pairs == [] and out.skipped == 0


def test_all_matches_every_second_event():
    rng = np.random.default_rng(7)
    stream = EventStream.from_arrays(rng.integers(0, 10, 10), rng.integers(0, 10, 10), np.arange(10) * 50000, width=10, height=10)
    out = extract_all_matches(stream, _random_smoothed_basis(8), DisplacementSet(), SPEC, every=2)
    assert len(out.pairs) + out.skipped == 5


def test_all_matches_deterministic_under_seed():
    stream = _shift_invariant_stream(9)
    basis = _random_smoothed_basis(10)
    a = extract_all_matches(stream, basis, DisplacementSet(), SPEC, fraction=0.1, seed=3)
    b = extract_all_matches(stream, basis, DisplacementSet(), SPEC, fraction=0.1, seed=3)
    assert [p.source for p in a.pairs] == [p.source for p in b.pairs]
    assert [p.delta for p in a.pairs] == [p.delta for p in b.pairs]
    assert all(np.array_equal(p.pc, q.pc) for p, q in zip(a.pairs, b.pairs))
    times = [p.source[2] for p in a.pairs]
    assert times == sorted(times)


def test_matched_dt_concentrates_on_true_speed():
    # checkerboard moving one pixel per 50 ms on each axis; its many junctions
    # avoid the aperture ambiguity of long straight edges
    path = [ControlPoint(0, 30, 30), ControlPoint(1_500_000, 60, 60)]
    stream, _ = synthesize_scene(SceneSpec("grid", path, 1_500_000, size=12, supersample=4, levels=4))
    stream = filter_noise(stream)
    spec = BoxSpec(10, 100000, 25)
    k = gaussian_kernel(3, 3, 3)
    raw = sample_count_vectors(stream, spec, 1500)
    pca = smooth_basis(fit_pca(smooth_vectors(raw, spec.dims, k), 0.95, 10, spec.dims), k, raw.mean(0))
    out = extract_all_matches(stream, pca, DisplacementSet(), spec, every=max(1, len(stream) // 300))
    share = np.mean([p.delta[2] == 50000 for p in out.pairs])
    assert len(out.pairs) > 200
    assert share >= 0.8


# --- match file -------------------------------------------------------------


def test_match_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    pairs = [
        MatchPair(rng.random(6), rng.random(6), (-1, 1, 50000), (3, 4, 123456789), 0.5),
        MatchPair(rng.random(6), rng.random(6), (1, -1, 25000), (65535, 0, 2**40), 0.0),
    ]
    write_matches(pairs, tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:4] == b"MPR1" and len(raw) == 12 + 2 * (22 + 16 * 6)
    back = load_matches(tmp_path / "m.bin")
    for p, q in zip(pairs, back):
        assert q.source == p.source and q.delta == p.delta
        assert np.array_equal(q.pc, p.pc) and np.array_equal(q.pc_prime, p.pc_prime)
