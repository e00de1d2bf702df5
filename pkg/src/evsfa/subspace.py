"""PCA and pairwise slow-feature bases over vectorised spike-count grids.

Weights are stored row-wise: ``basis.weights`` has shape ``(n, d)`` and the
feature of a count vector ``c`` is ``weights @ c - weights @ mean``.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy import ndimage

from .events import atomic_write
from .voxel import BoxSpec, Kernel3D, ShapeError, convolve3d, matricize, sparse_counts, vectorize

__all__ = [
    "ProjectionBasis",
    "DegenerateDataError",
    "ConditioningError",
    "BasisStateError",
    "fit_pca",
    "fit_sfa",
    "reverse_sfa",
    "slowness",
    "sfa_matrices",
    "smooth_basis",
    "smooth_vectors",
    "extract_feature",
    "write_basis",
    "load_basis",
]

log = logging.getLogger(__name__)

KINDS = ("pca", "sfa", "sfa-reversed")


class DegenerateDataError(ValueError):
    """The samples carry no variance to decompose."""


class ConditioningError(ValueError):
    """The covariance is too close to singular even after the ridge."""


class BasisStateError(ValueError):
    """Operation not valid for the basis in its current state."""


@dataclass(eq=False)
class ProjectionBasis:
    """An ordered set of weight vectors over ``dims``-shaped grids.

    Attributes
    ----------
    kind : {"pca", "sfa", "sfa-reversed"}
    dims : tuple of int
        ``(a, a, M)`` shape of a matricised weight.
    weights : ndarray, shape (n, d)
    scores : ndarray, shape (n,)
        Explained variance (pca) or slowness (sfa kinds).
    mean : ndarray, shape (d,)
        Centering vector, in the domain the weights are applied to.
    smoothed : bool
        Whether the Gaussian kernel has been folded into the weights.
    sigma : tuple of float or None
        Kernel widths used for smoothing.
    """

    kind: str
    dims: tuple
    weights: np.ndarray
    scores: np.ndarray
    mean: np.ndarray
    smoothed: bool = False
    sigma: tuple | None = None
    _offset: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        self.dims = tuple(int(v) for v in self.dims)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.scores = np.asarray(self.scores, dtype=float).reshape(-1)
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        d = int(np.prod(self.dims))
        if self.weights.shape[1] != d or self.mean.shape != (d,):
            raise ShapeError(f"weights/mean do not match dims {self.dims}")
        if len(self.scores) != len(self.weights):
            raise ShapeError("one score per weight vector required")

    def __len__(self):
        return len(self.weights)

    @property
    def d(self):
        return self.weights.shape[1]

    @property
    def offset(self):
        """Per-weight constant subtracted from raw projections."""
        if self._offset is None:
            self._offset = self.weights @ self.mean
        return self._offset

    def head(self, n):
        """The first ``n`` weights, in order."""
        return replace(self, weights=self.weights[:n], scores=self.scores[:n], _offset=None)

    def transform(self, vectors):
        """Project row vectors (already in the weights' domain)."""
        return np.asarray(vectors, dtype=float) @ self.weights.T - self.offset


def _fix_signs(vecs):
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_pca(samples, variance_fraction=0.95, k_max=None, dims=None) -> ProjectionBasis:
    """Principal components keeping ``variance_fraction`` of the variance.

    Parameters
    ----------
    samples : array_like, shape (n, d)
        Smoothed count vectors, one per row.
    variance_fraction : float
        Smallest cumulative share of total variance to retain.
    k_max : int, optional
        Upper bound on the number of components.
    dims : tuple, optional
        Grid shape of a weight; defaults to ``(d, 1, 1)``.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need at least 2 sample vectors")
    if not 0 < variance_fraction <= 1:
        raise ValueError("variance_fraction must lie in (0, 1]")
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / n
    evals, evecs = scipy.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    evals = np.clip(evals, 0.0, None)
    total = evals.sum()
    if not total > 0 or evals[0] <= 1e-13 * max(1.0, np.abs(X).max() ** 2):
        raise DegenerateDataError("samples are identical; covariance is zero")
    share = np.cumsum(evals) / total
    k = int(np.searchsorted(share, variance_fraction * (1 - 1e-12)) + 1)
    k = min(k, d)
    if k_max is not None:
        k = min(k, int(k_max))
    W = _fix_signs(evecs[:, :k])
    return ProjectionBasis("pca", dims or (d, 1, 1), W.T, evals[:k], mean)


def sfa_matrices(pcs, pcs_next):
    """Intra-pair change matrix ``A`` and first-element covariance ``B`` (no ridge)."""
    P = np.asarray(pcs, dtype=float)
    Q = np.asarray(pcs_next, dtype=float)
    if P.shape != Q.shape or P.ndim != 2:
        raise ShapeError("pair elements must be equally shaped (n, d) arrays")
    if len(P) < 2:
        raise ValueError("need at least 2 pairs")
    n = len(P)
    D = Q - P
    A = (D.T @ D) / n
    Pc = P - P.mean(axis=0)
    B = (Pc.T @ Pc) / n
    return A, B, P.mean(axis=0)


def slowness(w, pcs, pcs_next):
    """Pairwise slowness of projection ``w``: mean squared intra-pair change over variance."""
    P = np.asarray(pcs, dtype=float)
    Q = np.asarray(pcs_next, dtype=float)
    yp, yq = P @ w, Q @ w
    return float(np.mean((yq - yp) ** 2) / np.mean((yp - yp.mean()) ** 2))


def _sfa_solve(pairs, ridge):
    """Generalised eigenpairs of ``(A, B)`` by whitening on the well-determined part of ``B``.

    Directions whose variance is at most ``ridge * trace(B) / d`` carry no
    reliable slowness (both quotient terms vanish with them) and are left
    out. Returned vectors satisfy ``W.T @ B @ W = I`` and their eigenvalues
    are exact slowness quotients.
    """
    pcs, pcs_next = pairs
    A, B, mean = sfa_matrices(pcs, pcs_next)
    d = A.shape[0]
    bvals, bvecs = scipy.linalg.eigh(B)
    floor = ridge * max(np.trace(B), 0.0) / d
    keep = bvals > max(floor, 0.0)
    if not keep.any() or np.trace(B) <= 0:
        raise ConditioningError(
            f"first-element covariance is singular; smallest eigenvalue {bvals[0]:.3e}, "
            f"largest {bvals[-1]:.3e}"
        )
    S = bvecs[:, keep] / np.sqrt(bvals[keep])
    Aw = S.T @ A @ S
    lam, U = scipy.linalg.eigh((Aw + Aw.T) / 2)
    V = S @ U
    return lam, V, mean


def _split_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 2:
        return np.asarray(pairs[0], dtype=float), np.asarray(pairs[1], dtype=float)
    pairs = list(pairs)
    return (
        np.array([p[0] for p in pairs], dtype=float),
        np.array([p[1] for p in pairs], dtype=float),
    )


def fit_sfa(pairs, n_sfa, ridge=1e-8, dims=None, *, reverse=False) -> ProjectionBasis:
    """Slowest projections of matched vector pairs.

    Solves ``A w = lambda B w`` where ``A`` is the mean outer product of
    intra-pair differences and ``B`` the covariance of the first pair
    elements. Directions of ``B`` with variance below ``ridge * trace(B) / d``
    are excluded. Weights are ``B``-normalised and ordered by increasing
    slowness; each score is the slowness quotient of its weight.

    Parameters
    ----------
    pairs : sequence of (pc, pc_next) or tuple of two (n, d) arrays
        Smoothed count vectors of matched locations.
    n_sfa : int
        Number of projections to keep.
    ridge : float
        Variance floor, relative to the mean variance per dimension.
    reverse : bool
        Keep the ``n_sfa`` fastest projections instead (descending order).
    """
    pcs, pcs_next = _split_pairs(pairs)
    d = pcs.shape[1]
    if n_sfa > d or n_sfa < 1:
        raise ValueError(f"n_sfa must be in [1, {d}], got {n_sfa}")
    lam, V, mean = _sfa_solve((pcs, pcs_next), ridge)
    if len(lam) < n_sfa:
        log.warning("only %d well-determined directions; returning that many", len(lam))
    keep = np.arange(len(lam))[::-1] if reverse else np.arange(len(lam))
    W = V[:, keep[:n_sfa]]
    # whitened eigenvalues (and w'Aw) lose relative precision when weights are
    # large; projecting the samples first keeps each score exact to rounding
    quot = np.mean(((pcs_next - pcs) @ W) ** 2, axis=0) / np.mean(((pcs - mean) @ W) ** 2, axis=0)
    order = np.argsort(-quot if reverse else quot, kind="stable")
    W, quot = _fix_signs(W[:, order]), quot[order]
    return ProjectionBasis(
        "sfa-reversed" if reverse else "sfa",
        dims or (d, 1, 1),
        W.T,
        quot,
        mean,
    )


def reverse_sfa(pairs, n, ridge=1e-8, dims=None) -> ProjectionBasis:
    """The ``n`` projections with the largest slowness, fastest first."""
    return fit_sfa(pairs, n, ridge, dims, reverse=True)


def smooth_vectors(vectors, dims, kernel: Kernel3D):
    """Convolve each row vector's grid form with ``kernel``."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    a1, a2, M = dims
    if V.shape[1] != a1 * a2 * M:
        raise ShapeError(f"vectors of length {V.shape[1]} do not match grid {tuple(dims)}")
    if not isinstance(kernel, Kernel3D):
        return np.array([vectorize(convolve3d(matricize(v, dims), kernel)) for v in V])
    # row-major view of the x-fastest layout: [n, m, j, i]
    G = V.reshape(len(V), M, a2, a1)
    fx, fy, ft = kernel.factors
    for axis, f in ((3, fx), (2, fy), (1, ft)):
        G = ndimage.correlate1d(G, f, axis=axis, mode="constant", cval=0.0)
    return G.reshape(len(V), -1)


def smooth_basis(basis: ProjectionBasis, kernel: Kernel3D, raw_mean=None) -> ProjectionBasis:
    """Fold ``kernel`` into every weight so it can act on raw count grids.

    The basis was fitted on smoothed vectors, so its mean lives in the
    smoothed domain. Pass ``raw_mean``, the mean of the unsmoothed vectors,
    to keep feature centering exact; otherwise the smoothed mean is reused
    as is. Centering never changes feature differences.
    """
    if basis.smoothed:
        raise BasisStateError("basis is already smoothed")
    W = smooth_vectors(basis.weights, basis.dims, kernel)
    sigma = getattr(kernel, "sigma", None)
    return ProjectionBasis(
        basis.kind,
        basis.dims,
        W,
        basis.scores.copy(),
        basis.mean if raw_mean is None else raw_mean,
        smoothed=True,
        sigma=sigma,
    )


def extract_feature(stream, center, basis: ProjectionBasis, spec: BoxSpec):
    """Project the raw count grid at ``center`` onto a smoothed basis."""
    if not basis.smoothed:
        raise BasisStateError("extract_feature expects a smoothed basis")
    if basis.dims != spec.dims:
        raise ShapeError(f"basis dims {basis.dims} do not match box {spec.dims}")
    idx, cnt = sparse_counts(stream, center, spec)
    return basis.weights[:, idx] @ cnt - basis.offset


# ---------------------------------------------------------------------------
# basis file


def encode_basis(basis: ProjectionBasis) -> bytes:
    a, a2, M = basis.dims
    sx, sy, st = basis.sigma if basis.sigma is not None else (0.0, 0.0, 0.0)
    buf = io.StringIO()
    buf.write("kind,a,M,d,n,smoothed,sigma_x,sigma_y,sigma_t\n")
    buf.write(
        f"{basis.kind},{a},{M},{basis.d},{len(basis)},{int(basis.smoothed)},{sx!r},{sy!r},{st!r}\n"
    )
    buf.write(",".join(format(v, ".17g") for v in basis.mean) + "\n")
    for score, w in zip(basis.scores, basis.weights):
        buf.write(format(score, ".17g") + "," + ",".join(format(v, ".17g") for v in w) + "\n")
    return buf.getvalue().encode()


def write_basis(basis: ProjectionBasis, path):
    """Write a basis as a CSV header, the mean line and one ``score,w...`` line per weight."""
    atomic_write(path, encode_basis(basis))


def load_basis(path) -> ProjectionBasis:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or not lines[0].startswith("kind,"):
        raise ValueError(f"{path}: not a basis file")
    kind, a, M, d, n, smoothed, sx, sy, st = lines[1].split(",")
    a, M, d, n = int(a), int(M), int(d), int(n)
    mean = np.array([float(v) for v in lines[2].split(",")])
    rows = [np.array([float(v) for v in line.split(",")]) for line in lines[3 : 3 + n]]
    if len(rows) != n or any(len(r) != d + 1 for r in rows) or len(mean) != d:
        raise ValueError(f"{path}: basis body does not match header (d={d}, n={n})")
    body = np.array(rows).reshape(n, d + 1)
    sigma = (float(sx), float(sy), float(st))
    basis = ProjectionBasis(
        kind,
        (a, a, M),
        body[:, 1:],
        body[:, 0],
        mean,
        smoothed=bool(int(smoothed)),
        sigma=None if sigma == (0.0, 0.0, 0.0) else sigma,
    )
    return basis
