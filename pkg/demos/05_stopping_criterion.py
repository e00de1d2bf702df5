"""Holding position when there is nothing to track.

Run: python demos/05_stopping_criterion.py   (about a minute)
"""

# %%
import numpy as np

from evsfa.events import EventStream, filter_noise
from evsfa.evaluation import displacement_curve
from evsfa.matching import DisplacementSet
from evsfa.pipeline import PipelineConfig, initial_points, track_all, train
from evsfa.scene import ControlPoint, SceneSpec, synthesize_scene
from evsfa.tracker import track_point
from evsfa.voxel import BoxSpec

# %% [markdown]
# With no events at all, every candidate box is empty and the tracker only
# advances in time.

# %%
empty = EventStream.empty(64, 64)
spec = BoxSpec(10, 100_000, 25)

# %% [markdown]
# A stop-and-go scene: a checkerboard moves for 0.2 s, then rests for
# 0.1 s, over background noise. Compare a threshold of 5 events with no
# threshold at all.

# %%
train_scene = SceneSpec(
    "grid", (ControlPoint(0, 50, 50), ControlPoint(1_900_000, 69, 69)), 1_900_000,
    size=15, noise_rate=0.2, jitter_sigma=500, seed=1, supersample=4, levels=4,
)
cfg = PipelineConfig(max_samples=3000, max_matches=3000)
res = train(synthesize_scene(train_scene)[0], cfg)

traj = track_point(empty, (20, 20, 0), res.sfa_smoothed, DisplacementSet(), spec, N0=5, k=6)
print("empty stream:", traj.samples.astype(int).tolist())

cps, x, t = [ControlPoint(0, 40, 40)], 40.0, 0.0
while t < 1_900_000:
    t, x = min(t + 200_000, 1_900_000), x + 2.0
    cps.append(ControlPoint(t, x, x))
    if t < 1_900_000:
        t = min(t + 100_000, 1_900_000)
        cps.append(ControlPoint(t, x, x))
stop_go = SceneSpec("grid", tuple(cps), 1_900_000, size=15, noise_rate=0.5, jitter_sigma=500, seed=7,
                    supersample=4, levels=4)
stream, truth = synthesize_scene(stop_go)
stream = filter_noise(stream)
init = initial_points(truth, 200_000, stream.width, stream.height)

for rule in ("min", "best"):
    for n0 in (5, 0):
        c = PipelineConfig(N0=n0, count_rule=rule)
        est = track_all(stream, init, c, res.sfa_smoothed, t_end_after=1.55)
        d = displacement_curve(est, {k: truth[k] for k in est})
        print(f"count rule {rule:4s} N0={n0}: mean error peaks at {d.values.max():5.2f} px, ends at {d.values[-1]:5.2f} px")

# %% [markdown]
# The "min" rule tests the emptiest candidate box, which includes boxes
# reaching into the next pause, so even N0 = 0 stops the tracker now and
# then. The "best" rule tests only the chosen candidate.
