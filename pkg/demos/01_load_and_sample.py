"""Load the bundled rotorcraft-style model, inspect it, and draw initial states.

Run with ``python3 demos/01_load_and_sample.py``.
"""

from dataclasses import replace

from encx import bundled_model_path
from encx.bayes import exact_joint, normalize
from encx.model_format import load_model
from encx.trajectory import LOW_ALTITUDE_LAYERS, sample_many

model = load_model(bundled_model_path("toy.json"))
print(f"{model.name}: {len(model.variables)} variables, floor {model.altitude_floor:g} ft AGL")
for var in model.variables:
    print(f"  {var.id:5s} {var.name:18s} {var.units:10s} {var.bin_count} bins")

# Normalizing applies the additive smoothing and builds cumulative rows for sampling.
compiled = normalize(model)

# The exact altitude marginal comes from enumerating the initial network.
alt = exact_joint(compiled.initial, ["L"])
for label, p in zip(alt.labels[0], alt.probs):
    print(f"  P(L in {label}) = {p:.4f}")

# Initial states restricted to low altitude and moderate airspeed. Each state has
# continuous values drawn uniformly inside its bins, plus the bins themselves.
window = replace(LOW_ALTITUDE_LAYERS, airspeed=(40, 120))
states = list(sample_many(compiled, 5, seed=2024, constraints=window))
for s in states:
    print(f"  alt {s.altitude:7.1f} ft  v {s.velocity:6.1f} kt  hdg {s.heading:5.1f}  bins {s.bins}")
