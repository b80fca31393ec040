"""Compare two models variable by variable with histogram intersection.

The second bundled model starts its altitude bins at 500 ft, so the lowest layer of
the first model has no counterpart; the alignment note says so and that bin gets zero
mass on the other side.

Run with ``python3 demos/03_compare_models.py``.
"""

from encx import bundled_model_path
from encx.analysis import all_pairs_overlap, transition_overlap
from encx.bayes import normalize
from encx.model_format import load_model

rotor = normalize(load_model(bundled_model_path("toy.json")))
rades = normalize(load_model(bundled_model_path("toy_rades.json")))

pairs = [("L", None), ("V", None), ("L", "G"), ("V", "L"), ("DZ", "DH")]

print("exact, from the networks themselves:")
for r in all_pairs_overlap(rades, rotor, pairs, mode="exact"):
    cond = "" if r.independent == "marginal" else f" | {r.independent}"
    print(f"  {r.dependent}{cond:6s} {r.overlap:7.3f}%  {r.classification}")
    if r.alignment_note:
        print(f"      note: {r.alignment_note}")

print("sampled, 10^5 draws per side:")
for r in all_pairs_overlap(rades, rotor, pairs, n=10**5, rng=11):
    cond = "" if r.independent == "marginal" else f" | {r.independent}"
    print(f"  {r.dependent}{cond:6s} {r.overlap:7.3f}%  {r.classification}")

print("controls pooled over 300 trajectories of 60 s:")
for var in ("DH", "DZ", "DPSI"):
    r = transition_overlap(rades, rotor, var, trajectories=300, duration=60, seed=3)
    print(f"  {var:5s} {r.overlap:7.3f}%  {r.classification}")
