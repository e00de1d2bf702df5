"""Tracking corners with learned features and with time surfaces, then scoring both.

Run: python demos/04_tracking_and_evaluation.py   (about a minute)
"""

# %%
import numpy as np

from evsfa.events import filter_noise
from evsfa.pipeline import PipelineConfig, evaluate, initial_points, track_all, train
from evsfa.scene import ControlPoint, SceneSpec, synthesize_scene


def scene(seed, v):
    x0 = 64 - v * 0.95
    return SceneSpec(
        "grid",
        (ControlPoint(0, x0, x0), ControlPoint(1_900_000, x0 + 1.9 * v, x0 + 1.9 * v)),
        1_900_000,
        size=15,
        noise_rate=0.2,
        jitter_sigma=500,
        seed=seed,
        supersample=4,
        levels=4,
    )


# %% [markdown]
# Learn on one scene and track on another moving at a similar speed,
# about one pixel per 100 ms along each axis.

# %%
cfg = PipelineConfig(max_samples=3000, max_matches=3000)
res = train(synthesize_scene(scene(1, 10.0))[0], cfg)
stream, truth = synthesize_scene(scene(2, 11.0))
stream = filter_noise(stream)
init = initial_points(truth, 200_000, stream.width, stream.height)
print(f"tracking {len(init)} junctions from t = 0.2 s")

# %% [markdown]
# Each tracker steps one pixel diagonally per chosen time step and holds
# when its neighbourhood is nearly empty. The time-surface tracker uses
# the same loop with a different dissimilarity.

# %%
for name, basis in (("slow features", res.sfa_smoothed), ("time surfaces", None)):
    est = track_all(stream, init, cfg, basis, t_end_after=1.55)
    acc, dist = evaluate(est, truth, cfg)
    print(
        f"{name:14s} share within 7 px at 0.5/1.0/1.5 s: "
        f"{acc.at(0.5):.2f} {acc.at(1.0):.2f} {acc.at(1.5):.2f}; mean error at 1.5 s {dist.at(1.5):.1f} px"
    )

# %% [markdown]
# Curves are sampled every 50 ms from each tracker's start. n_alive counts
# the trackers whose ground truth still covers that time.

# %%
print("t (s):  ", np.round(acc.times[::6], 2))
print("n_alive:", acc.n_alive[::6])
