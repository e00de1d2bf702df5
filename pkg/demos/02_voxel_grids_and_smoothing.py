"""Counting events in a box, smoothing the count grid, and why smoothing can move onto the weights.

Run: python demos/02_voxel_grids_and_smoothing.py
"""

# %%
import numpy as np

from evsfa.scene import ControlPoint, SceneSpec, synthesize_scene
from evsfa.voxel import (
    BoxSpec,
    box_offsets,
    convolve3d,
    gaussian_kernel,
    spike_count_matrix,
    verify_projection_identity,
)

# %% [markdown]
# A box is a*a pixels around an event and the preceding T microseconds,
# split into M time bins. With a = 10 the pixel offsets run from -5 to 4.

# %%
spec = BoxSpec(a=10, T=100_000, M=25)
print("pixel offsets:", box_offsets(spec.a), "grid shape:", spec.dims, "bin width:", spec.bin_width, "us")

scene = SceneSpec("corner", (ControlPoint(0, 60, 60), ControlPoint(1_000_000, 50, 50)), 1_000_000, size=12)
stream, truth = synthesize_scene(scene)
ev = stream[len(stream) // 2]
grid = spike_count_matrix(stream, (ev.x, ev.y, ev.t), spec)
print(f"events in the box around event {len(stream) // 2}: {int(grid.sum())}")
print("events per time bin:", grid.sum(axis=(0, 1)).astype(int))

# %% [markdown]
# Counts are sparse. A separable Gaussian (sigma 3 px, 3 px, 3 bins) spreads
# them into a dense grid.

# %%
kernel = gaussian_kernel(3, 3, 3)
dense = convolve3d(grid, kernel)
print(f"non-zero cells: {np.count_nonzero(grid)} before, {np.count_nonzero(dense > 1e-6)} after smoothing")

# %% [markdown]
# Because the kernel is mirror-symmetric, projecting a smoothed grid onto a
# weight equals projecting the raw grid onto the smoothed weight. Learned
# weights are smoothed once, so tracking never convolves per query.

# %%
w = np.random.default_rng(0).normal(size=spec.dims)
lhs, rhs = verify_projection_identity(w, grid, kernel)
print(f"<w, K*C> = {lhs:.10f}\n<K*w, C> = {rhs:.10f}")
