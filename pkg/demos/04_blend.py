"""Blend two models and watch the overlap move between them.

A blend picks one component per sampled unit according to the weights, so its exact
distribution is the weighted sum of the components' distributions.

Run with ``python3 demos/04_blend.py``.
"""

from encx import bundled_model_path
from encx.analysis import blend, pairwise_overlap
from encx.bayes import normalize
from encx.model_format import load_model
from encx.trajectory import generate_many

rotor = normalize(load_model(bundled_model_path("toy.json")))
rades = normalize(load_model(bundled_model_path("toy_rades.json")))

print("weight on rotor   L vs rotor   L vs rades")
for w in (0.0, 0.25, 0.5, 0.75, 1.0):
    mix = blend([rotor, rades], [w, 1 - w])
    to_rotor = pairwise_overlap(mix, rotor, "L", mode="exact").overlap
    to_rades = pairwise_overlap(mix, rades, "L", mode="exact").overlap
    print(f"{w:15.2f}   {to_rotor:9.2f}%   {to_rades:9.2f}%")

# Trajectories remember which component generated them.
mix = blend([rotor, rades], [0.3, 0.7], name="mix")
counts = [0, 0]
for t in generate_many(mix, 1000, seed=5, duration=10):
    counts[t.component] += 1
print(f"component counts over 1000 trajectories: rotor {counts[0]}, rades {counts[1]}")
