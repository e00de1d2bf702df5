"""Learning projections: PCA for matching, then slow features from the matches.

Run: python demos/03_learning_slow_features.py   (about a minute)
"""

# %%
import numpy as np

from evsfa.pipeline import PipelineConfig, train
from evsfa.scene import ControlPoint, SceneSpec, synthesize_scene
from evsfa.subspace import slowness, smooth_vectors
from evsfa.voxel import matricize

# %% [markdown]
# Training data: a checkerboard drifting diagonally while it grows.

# %%
scene = SceneSpec(
    "grid",
    (ControlPoint(0, 50, 50, 1.0), ControlPoint(1_900_000, 72, 72, 1.15)),
    1_900_000,
    size=15,
    noise_rate=0.2,
    jitter_sigma=500,
    seed=1,
    supersample=4,
    levels=4,
)
stream, _ = synthesize_scene(scene)
cfg = PipelineConfig(max_samples=3000, max_matches=3000)
res = train(stream, cfg)

# %% [markdown]
# PCA keeps the components that explain 95% of the smoothed count variance
# (at most 10). Its features pick, for sampled events, the displaced
# location that looks most alike. Each pick is one training pair.

# %%
print(f"PCA components: {len(res.pca)}, explained variance {np.array2string(res.pca.scores, precision=2)}")
dts = [m.delta[2] for m in res.matches.pairs]
values, counts = np.unique(dts, return_counts=True)
print("chosen time steps (us):", dict(zip(values.tolist(), counts.tolist())))

# %% [markdown]
# Slow feature analysis finds projections that change least within a pair,
# relative to their overall variance. Scores come out in ascending order
# and equal that ratio on the training pairs.

# %%
P = np.array([m.pc for m in res.matches.pairs])
Q = np.array([m.pc_prime for m in res.matches.pairs])

Ps, Qs = smooth_vectors(P, cfg.box.dims, cfg.kernel), smooth_vectors(Q, cfg.box.dims, cfg.kernel)
print("slowest scores:", res.sfa.scores[:5].round(4))
print("fastest kept:  ", res.sfa.scores[-3:].round(4))
print("recomputed:    ", round(slowness(res.sfa.weights[0], Ps, Qs), 4))

# %% [markdown]
# A weight is a 10x10x25 grid. The slowest ones vary smoothly in time.

# %%
g = matricize(res.sfa_smoothed.weights[0], cfg.box.dims)
energy = (g**2).sum(axis=(0, 1))
print("energy per time bin of the slowest smoothed weight:", (energy / energy.max()).round(2))
