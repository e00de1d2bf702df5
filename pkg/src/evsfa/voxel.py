"""Box neighbourhoods, spike-count grids and separable 3D Gaussian smoothing.

Grids are ``(a, a, M)`` arrays indexed ``[i, j, m]``: ``i`` is the x offset,
``j`` the y offset and ``m`` the temporal bin. Spatial offsets run over
``[-ceil((a-1)/2), floor((a-1)/2)]`` (``-5..4`` for ``a = 10``) and the temporal
window is causal, ``(t - T, t]``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .events import EventStream, atomic_write

__all__ = [
    "BoxSpec",
    "Kernel3D",
    "ShapeError",
    "box_offsets",
    "box_neighborhood",
    "box_count",
    "spike_count_matrix",
    "sparse_counts",
    "gaussian_kernel",
    "convolve3d",
    "vectorize",
    "matricize",
    "project",
    "verify_projection_identity",
    "write_grid",
    "load_grid",
]


class ShapeError(ValueError):
    """Array shapes that should agree do not."""


@dataclass(frozen=True)
class BoxSpec:
    """Spatial side ``a`` (pixels), temporal extent ``T`` (us), ``M`` time bins."""

    a: int = 10
    T: float = 100000
    M: int = 25

    def __post_init__(self):
        if self.a < 1 or self.M < 1 or not self.T > 0:
            raise ValueError(f"invalid box: a={self.a}, T={self.T}, M={self.M}")

    @property
    def dims(self):
        return (self.a, self.a, self.M)

    @property
    def d(self):
        return self.a * self.a * self.M

    @property
    def bin_width(self):
        return self.T / self.M

    def with_window(self, T):
        """Same grid, stretched over a different temporal extent."""
        return BoxSpec(self.a, T, self.M)


def box_offsets(a):
    """Inclusive (lo, hi) spatial offsets of an ``a``-wide box."""
    lo = -((a - 1) // 2 + (a - 1) % 2)
    return lo, lo + a - 1


def _box_mask(stream, cx, cy, spec, lo, hi):
    off_lo, off_hi = box_offsets(spec.a)
    dx = stream.x[lo:hi] - cx
    dy = stream.y[lo:hi] - cy
    return (dx >= off_lo) & (dx <= off_hi) & (dy >= off_lo) & (dy <= off_hi), dx, dy


def box_neighborhood(stream: EventStream, center, spec: BoxSpec) -> EventStream:
    """Events inside the box of ``spec`` ending at ``center = (x, y, t)``."""
    cx, cy, ct = center
    lo, hi = stream.time_slice(ct - spec.T, ct)
    mask, _, _ = _box_mask(stream, cx, cy, spec, lo, hi)
    return stream[lo:hi][mask]


def box_count(stream: EventStream, center, spec: BoxSpec) -> int:
    """``len(box_neighborhood(...))`` without materialising the events."""
    cx, cy, ct = center
    lo, hi = stream.time_slice(ct - spec.T, ct)
    mask, _, _ = _box_mask(stream, cx, cy, spec, lo, hi)
    return int(mask.sum())


def sparse_counts(stream: EventStream, center, spec: BoxSpec):
    """Non-zero voxels of the count grid as ``(flat_index, count)`` arrays.

    ``flat_index`` follows :func:`vectorize` ordering.
    """
    cx, cy, ct = center
    lo, hi = stream.time_slice(ct - spec.T, ct)
    mask, dx, dy = _box_mask(stream, cx, cy, spec, lo, hi)
    if not mask.any():
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    off_lo, _ = box_offsets(spec.a)
    i = dx[mask] - off_lo
    j = dy[mask] - off_lo
    start = ct - spec.T
    m = np.floor((stream.t[lo:hi][mask] - start) / spec.bin_width).astype(np.int64)
    np.clip(m, 0, spec.M - 1, out=m)
    flat = i + spec.a * j + spec.a * spec.a * m
    idx, cnt = np.unique(flat, return_counts=True)
    return idx, cnt.astype(float)


def spike_count_matrix(stream: EventStream, center, spec: BoxSpec) -> np.ndarray:
    """The ``(a, a, M)`` histogram of events in the box around ``center``."""
    vec = np.zeros(spec.d)
    idx, cnt = sparse_counts(stream, center, spec)
    vec[idx] = cnt
    return matricize(vec, spec.dims)


# ---------------------------------------------------------------------------
# kernels and convolution


@dataclass(frozen=True)
class Kernel3D:
    """Separable kernel stored as three 1D factors; ``values`` is their outer product."""

    factors: tuple
    sigma: tuple | None = None

    @property
    def values(self):
        fx, fy, ft = self.factors
        return fx[:, None, None] * fy[None, :, None] * ft[None, None, :]

    @property
    def dims(self):
        return tuple(len(f) for f in self.factors)

    @property
    def center(self):
        return tuple(len(f) // 2 for f in self.factors)


def gaussian_kernel(sigma_x, sigma_y, sigma_t) -> Kernel3D:
    """Sampled 3D Gaussian with diagonal covariance, truncated at ``ceil(3 sigma)``.

    Sigmas are in voxels (``sigma_t`` in units of one temporal bin). The
    kernel is normalised to unit sum.
    """
    factors = []
    for s in (sigma_x, sigma_y, sigma_t):
        if not s > 0:
            raise ValueError(f"sigma must be positive, got {s}")
        half = int(math.ceil(3 * s))
        u = np.arange(-half, half + 1, dtype=float)
        g = np.exp(-(u**2) / (2.0 * s * s))
        factors.append(g / g.sum())
    return Kernel3D(tuple(factors), (float(sigma_x), float(sigma_y), float(sigma_t)))


def identity_kernel() -> Kernel3D:
    one = np.ones(1)
    return Kernel3D((one, one, one))


def convolve3d(grid, kernel) -> np.ndarray:
    """'Same'-size correlation of ``grid`` with ``kernel`` under zero padding.

    ``kernel`` may be a :class:`Kernel3D` (applied as three 1D passes) or a
    dense odd-shaped array. For mirror-symmetric kernels correlation and
    convolution coincide.
    """
    grid = np.asarray(grid, dtype=float)
    if isinstance(kernel, Kernel3D):
        out = grid
        for axis, f in enumerate(kernel.factors):
            out = ndimage.correlate1d(out, f, axis=axis, mode="constant", cval=0.0)
        return out
    kernel = np.asarray(kernel, dtype=float)
    if any(n % 2 == 0 for n in kernel.shape):
        raise ShapeError(f"kernel extents must be odd, got {kernel.shape}")
    return ndimage.correlate(grid, kernel, mode="constant", cval=0.0)


def is_mirror_symmetric(kernel, rtol=1e-12):
    k = kernel.values if isinstance(kernel, Kernel3D) else np.asarray(kernel, dtype=float)
    scale = max(np.abs(k).max(), 1e-300)
    return bool(np.abs(k - k[::-1, ::-1, ::-1]).max() <= rtol * scale)


# ---------------------------------------------------------------------------
# vector <-> grid


def vectorize(grid) -> np.ndarray:
    """Flatten x-fastest, then y, then t: ``index = i + a*j + a*a*m``."""
    return np.asarray(grid).ravel(order="F")


def matricize(vector, dims) -> np.ndarray:
    vector = np.asarray(vector)
    if vector.size != int(np.prod(dims)):
        raise ShapeError(f"vector of length {vector.size} cannot fill grid {tuple(dims)}")
    return vector.reshape(dims, order="F")


def project(weight_grid, count_grid) -> float:
    """Sum of the element-wise product of two equally shaped grids."""
    w = np.asarray(weight_grid, dtype=float)
    c = np.asarray(count_grid, dtype=float)
    if w.shape != c.shape:
        raise ShapeError(f"shape mismatch {w.shape} vs {c.shape}")
    return float(np.sum(w * c))


def verify_projection_identity(weight_grid, count_grid, kernel):
    """Both sides of ``sum(W o (C * K)) == sum((W * K) o C)``.

    Holds exactly for mirror-symmetric ``K`` under zero-padded 'same'
    convolution; asymmetric kernels are rejected.
    """
    if not is_mirror_symmetric(kernel):
        raise ValueError("kernel is not mirror-symmetric; the identity needs the mirrored kernel")
    lhs = project(weight_grid, convolve3d(count_grid, kernel))
    rhs = project(convolve3d(weight_grid, kernel), count_grid)
    return lhs, rhs


# ---------------------------------------------------------------------------
# grid dump


def encode_grid(grid) -> bytes:
    grid = np.asarray(grid, dtype=float)
    a1, a2, M = grid.shape
    buf = io.StringIO()
    buf.write(f"{a1},{a2},{M}\n")
    for m in range(M):
        for j in range(a2):
            for i in range(a1):
                buf.write(f"{i},{j},{m},{float(grid[i, j, m])!r}\n")
    return buf.getvalue().encode()


def write_grid(grid, path):
    """Dump a grid as an ``a,a,M`` header and ``i,j,m,value`` lines."""
    atomic_write(path, encode_grid(grid))


def load_grid(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    dims = tuple(int(v) for v in lines[0].split(","))
    grid = np.zeros(dims)
    for line in lines[1:]:
        if line:
            i, j, m, v = line.split(",")
            grid[int(i), int(j), int(m)] = float(v)
    return grid
