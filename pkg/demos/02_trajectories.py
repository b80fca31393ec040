"""Generate a few three-minute trajectories and summarize how they move.

Run with ``python3 demos/02_trajectories.py``.
"""

import math

import numpy as np

from encx import bundled_model_path
from encx.bayes import normalize
from encx.model_format import load_model
from encx.trajectory import generate_many

model = normalize(load_model(bundled_model_path("toy.json")))

# Unit i always uses substream (seed, i), so these are the same trajectories on every
# run and for any number of workers.
trajectories = list(generate_many(model, 200, seed=7, duration=180, dt=1))
print(f"{len(trajectories)} trajectories of {len(trajectories[0])} states each")

climb = np.array([t.states[-1].altitude - t.states[0].altitude for t in trajectories])
travel = np.array([math.hypot(t.states[-1].north, t.states[-1].east) for t in trajectories])
print(f"net altitude change: median {np.median(climb):.0f} ft, range [{climb.min():.0f}, {climb.max():.0f}]")
print(f"straight-line distance from start: median {np.median(travel) / 6076.12:.2f} nmi")

clamped = sum(bool(s.clamped) for t in trajectories for s in t.states)
print(f"states with a clamp flag: {clamped}")

first = trajectories[0]
print("first trajectory, every 30 s:")
for s in first.states[::30]:
    print(f"  t={s.t:5.0f}  N={s.north:9.0f}  E={s.east:9.0f}  alt={s.altitude:7.0f}  v={s.velocity:6.1f}"
          f"  dz={s.vertical_rate:7.0f} ft/min  dpsi={s.turn_rate:5.2f} deg/s")
