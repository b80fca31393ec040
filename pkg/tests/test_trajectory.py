import math
import random

import numpy as np
import pytest
from scipy import stats

from builders import binned, categorical, flying_model
from encx.bayes import exact_joint, normalize
from encx.errors import KindError, RejectionBudgetExceeded
from encx.trajectory import (
    CLAMP_ALTITUDE_FLOOR,
    KT_TO_FPS,
    KinematicState,
    SamplingConstraints,
    dediscretize,
    generate,
    generate_many,
    sample_initial,
    sample_many,
    step,
)

ALT = binned("L", "ft_agl", [50, 500, 1200, 5000])


def test_dediscretize_examples():
    assert dediscretize(ALT, 1, 0.0) == 500
    assert dediscretize(ALT, 1, 0.5) == 850
    top = dediscretize(ALT, 1, 1 - 2**-53)
    assert 500 <= top < 1200
    with pytest.raises(KindError):
        dediscretize(categorical("G", 3), 0, 0.5)
    with pytest.raises(IndexError):
        dediscretize(ALT, 3, 0.5)


def test_dediscretize_uniform_ks_per_bin():
    crit = stats.kstwo.ppf(0.99, 10_000)
    rng = random.Random(42)
    for b in range(ALT.bin_count):
        lo, hi = ALT.edges[b], ALT.edges[b + 1]
        x = np.array([dediscretize(ALT, b, rng.random()) for _ in range(10_000)])
        assert np.all((x >= lo) & (x < hi))
        d = stats.kstest(x, stats.uniform(loc=lo, scale=hi - lo).cdf).statistic
        assert d < crit


def test_vacuous_constraints_accept_first_draw(toy):
    full = SamplingConstraints(altitude=(50, 5000), airspeed=(30, 250), max_attempts=1)
    for seed in range(2000):
        sample_initial(toy, full, random.Random(seed))


def test_disjoint_constraints_raise(toy):
    with pytest.raises(RejectionBudgetExceeded):
        sample_initial(toy, SamplingConstraints(altitude=(10_000, 20_000)), random.Random(0))


def test_nearly_disjoint_constraints_exhaust_budget():
    m = normalize(flying_model(alt_probs=(1, 1e-9)))
    with pytest.raises(RejectionBudgetExceeded, match="after 50 attempts"):
        sample_initial(m, SamplingConstraints(altitude=(4999, 5000), max_attempts=50), random.Random(0))


def test_constraints_validated():
    with pytest.raises(ValueError):
        SamplingConstraints(altitude=(10, 5))
    with pytest.raises(ValueError):
        SamplingConstraints(max_attempts=0)


def test_constrained_outputs_inside_window(toy):
    window = SamplingConstraints(altitude=(50, 1200), airspeed=(40, 100))
    for s in sample_many(toy, 3000, 9, window):
        assert 50 <= s.altitude <= 1200 and 40 <= s.velocity <= 100
        assert 0 <= s.heading < 360 and s.north == 0 and s.east == 0


def test_acceptance_rate_matches_exact_mass():
    m = normalize(flying_model(alt_edges=(50, 500, 1200), alt_probs=(0.3, 0.7)))
    mass = exact_joint(m.initial, ["L"]).probs[0]
    one_try = SamplingConstraints(altitude=(50, 500), max_attempts=1)
    rng = random.Random(77)
    accepted = 0
    attempts = 100_000
    for _ in range(attempts):
        try:
            sample_initial(m, one_try, rng)
            accepted += 1
        except RejectionBudgetExceeded:
            pass
    assert abs(accepted / attempts - mass) < 0.01


def _state(**kw):
    base = dict(t=0.0, north=0.0, east=0.0, altitude=1000.0, velocity=100.0, heading=30.0,
                acceleration=0.0, vertical_rate=0.0, turn_rate=0.0,
                bins={"L": 0, "V": 0, "DH": 0, "DZ": 0, "DPSI": 0})
    base.update(kw)
    return KinematicState(**base)


def test_straight_and_level_step():
    m = normalize(flying_model())
    s = _state()
    nxt = step(m, s, random.Random(0))
    assert (nxt.velocity, nxt.altitude, nxt.heading) == (100.0, 1000.0, 30.0)
    v_fps = 100 * KT_TO_FPS
    assert nxt.north == pytest.approx(v_fps * math.cos(math.radians(30)), rel=1e-14)
    assert nxt.east == pytest.approx(v_fps * math.sin(math.radians(30)), rel=1e-14)
    assert nxt.t == 1.0 and nxt.clamped == frozenset()


def test_vertical_rate_unit_conversion():
    m = normalize(flying_model())
    assert step(m, _state(vertical_rate=600.0), random.Random(0)).altitude == 1010.0


def test_half_circle_radius():
    m = normalize(flying_model(acc_edges=(0, 1e-9), vr_edges=(0, 1e-9), tr_edges=(3, 3 + 1e-9)))
    s = _state(heading=0.0, turn_rate=3.0)
    rng = random.Random(1)
    for _ in range(60):
        s = step(m, s, rng)
    assert s.heading == pytest.approx(180.0, abs=1e-5)
    radius = 100 * KT_TO_FPS * (180 / math.pi) / 3
    assert math.hypot(s.north, s.east) / 2 == pytest.approx(radius, rel=0.02)


def test_generate_lengths(toy):
    assert len(generate(toy, duration=0, rng=random.Random(0))) == 1
    traj = generate(toy, duration=180, dt=1, rng=random.Random(0))
    assert [s.t for s in traj.states] == [float(t) for t in range(181)]
    half = generate(toy, duration=3, dt=0.5, rng=random.Random(0))
    assert [s.t for s in half.states] == [0, 0.5, 1, 1.5, 2, 2.5, 3]
    with pytest.raises(ValueError):
        generate(toy, duration=10, dt=3, rng=random.Random(0))


def _descender():
    """Altitude starts in the floor layer and the vertical rate is always strongly negative."""
    return normalize(flying_model(
        alt_edges=(50, 500, 5000), alt_probs=(1, 0),
        vel_edges=(30, 40, 250), vel_probs=(1, 0),
        acc_edges=(-2, -1), vr_edges=(-3000, -2000),
    ))


def test_floor_clamp_flags_and_zeroes_descent():
    m = _descender()
    traj = generate(m, duration=60, rng=random.Random(3))
    flagged = [s for s in traj.states if CLAMP_ALTITUDE_FLOOR in s.clamped]
    assert flagged
    for s in flagged:
        assert s.altitude == 50 and s.vertical_rate == 0.0
    assert any("velocity_low" in s.clamped for s in traj.states)
    assert all(s.velocity >= 30 for s in traj.states)


def test_trajectory_invariants_over_1000(toy):
    floor = toy.model.altitude_floor
    v_lo, v_hi = toy.roles.velocity.edges[0], toy.roles.velocity.edges[-1]
    clamped_steps = 0
    for traj in generate_many(toy, 1000, 2024):
        states = traj.states
        effective = 0.0
        for a, b in zip(states, states[1:]):
            if CLAMP_ALTITUDE_FLOOR in b.clamped:
                clamped_steps += 1
                effective += b.altitude - a.altitude
            else:
                assert b.altitude - a.altitude == pytest.approx(a.vertical_rate / 60, abs=1e-9)
                effective += a.vertical_rate / 60
        assert states[-1].altitude - states[0].altitude == pytest.approx(effective, abs=1e-6)
        for s in states:
            assert s.altitude >= floor
            assert v_lo <= s.velocity <= v_hi
            assert 0 <= s.heading < 360
    assert clamped_steps > 0


def test_reproducible_and_worker_invariant(toy):
    a = list(generate_many(toy, 20, 7, duration=20, chunk=3))
    b = list(generate_many(toy, 20, 7, duration=20, chunk=3, workers=2))
    c = list(generate_many(toy, 20, 7, duration=20, chunk=20))
    assert a == b == c
    assert list(generate_many(toy, 20, 8, duration=20)) != a


def test_blend_generation_uses_components(toy, toy_rades):
    from encx.analysis import blend

    mix = blend([toy, toy_rades], [0.5, 0.5])
    seen = {t.component for t in generate_many(mix, 40, 1, duration=5)}
    assert seen == {0, 1}
    only_a = blend([toy, toy_rades], [1.0, 0.0])
    assert {t.component for t in generate_many(only_a, 40, 1, duration=5)} == {0}
