"""1 Hz trajectory generation from compiled encounter models.

Initial states come from the initial network by rejection sampling on the
de-discretized altitude and airspeed. Each step then

1. samples next-step control bins from the transition network, conditioned on
   the current bins;
2. draws control values uniformly inside those bins;
3. integrates the current controls with explicit Euler over ``dt``
   (position uses the pre-update velocity and heading);
4. clamps altitude at the model floor and velocity to the velocity edges,
   flagging the clamp and zeroing a new control that pushes further out;
5. re-discretizes altitude and velocity for the next conditioning.

The controls carried by state ``t`` are the ones applied over ``[t, t + dt]``,
so ``altitude[t+1] - altitude[t] == vertical_rate[t] * dt / 60`` at every
step that is not flagged ``altitude_floor``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from encx import streams
from encx.bayes import BlendedModel, CompiledModel, UniformSource, sample_bins
from encx.errors import KindError, ModelError, RejectionBudgetExceeded
from encx.model_format import VariableSpec

KT_TO_FPS = 1.68781
DEFAULT_DURATION_S = 180.0
DEFAULT_DT_S = 1.0
DEFAULT_MAX_ATTEMPTS = 100_000

CLAMP_ALTITUDE_FLOOR = "altitude_floor"
CLAMP_VELOCITY_LOW = "velocity_low"
CLAMP_VELOCITY_HIGH = "velocity_high"

Model = CompiledModel | BlendedModel


@dataclass(slots=True)
class KinematicState:
    t: float
    north: float
    east: float
    altitude: float
    velocity: float
    heading: float
    acceleration: float
    vertical_rate: float
    turn_rate: float
    bins: dict[str, int]
    clamped: frozenset[str] = frozenset()


@dataclass
class Trajectory:
    model_name: str
    dt: float
    states: list[KinematicState] = field(default_factory=list)
    component: int = 0  # index of the blend component that flew it; 0 for plain models

    def __len__(self) -> int:
        return len(self.states)

    @property
    def duration(self) -> float:
        return self.states[-1].t - self.states[0].t


@dataclass(frozen=True)
class SamplingConstraints:
    """Closed altitude (ft AGL) and airspeed (kt) windows; None leaves a quantity unconstrained."""

    altitude: tuple[float, float] | None = None
    airspeed: tuple[float, float] | None = None
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        for name, iv in (("altitude", self.altitude), ("airspeed", self.airspeed)):
            if iv is not None and not iv[0] <= iv[1]:
                raise ValueError(f"{name} interval must satisfy min <= max, got {iv}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")


# Altitude layers recommended for low-altitude studies.
LOW_ALTITUDE_LAYERS = SamplingConstraints(altitude=(50.0, 1200.0))


def dediscretize(var: VariableSpec, bin: int, u: float) -> float:
    """Value drawn uniformly inside bin ``bin`` of ``var``, given a uniform draw ``u`` in [0, 1)."""
    if not var.is_binned:
        raise KindError(f"variable {var.id!r} is categorical and has no numeric value")
    if not 0 <= bin < var.bin_count:
        raise IndexError(f"bin {bin} out of range for variable {var.id!r} with {var.bin_count} bins")
    lo = var.edges[bin]
    hi = var.edges[bin + 1]
    x = lo + u * (hi - lo)
    if x >= hi:
        x = math.nextafter(hi, lo)
    return x


def _require_roles(model: CompiledModel):
    roles = model.roles
    if roles.altitude is None or roles.velocity is None:
        raise ModelError(f"model {model.name!r} needs altitude (ft_agl) and velocity (kt) variables to fly")
    return roles


def _components(model: Model) -> tuple[CompiledModel, ...]:
    return model.components if isinstance(model, BlendedModel) else (model,)


def _disjoint(window: tuple[float, float] | None, var: VariableSpec) -> bool:
    return window is not None and (window[1] < var.edges[0] or window[0] >= var.edges[-1])


def _inside(x: float, window: tuple[float, float] | None) -> bool:
    return window is None or window[0] <= x <= window[1]


def _sample_initial(
    model: Model, constraints: SamplingConstraints, rng: UniformSource
) -> tuple[int, KinematicState]:
    comps = _components(model)
    for comp in comps:
        _require_roles(comp)
    if all(
        _disjoint(constraints.altitude, c.roles.altitude) or _disjoint(constraints.airspeed, c.roles.velocity)
        for c in comps
    ):
        raise RejectionBudgetExceeded(
            f"constraints {constraints.altitude} ft / {constraints.airspeed} kt are disjoint from the support of {model.name!r}"
        )

    blended = isinstance(model, BlendedModel)
    index = 0
    for _ in range(constraints.max_attempts):
        if blended:
            index = model.choose(rng.random())
        comp = comps[index]
        roles = comp.roles
        bins = sample_bins(comp.initial, rng)
        altitude = dediscretize(roles.altitude, bins[roles.altitude.id], rng.random())
        velocity = dediscretize(roles.velocity, bins[roles.velocity.id], rng.random())
        if _inside(altitude, constraints.altitude) and _inside(velocity, constraints.airspeed):
            break
    else:
        raise RejectionBudgetExceeded(
            f"no admissible initial state for {model.name!r} after {constraints.max_attempts} attempts"
        )

    controls = []
    for var in roles[2:]:
        controls.append(0.0 if var is None else dediscretize(var, bins[var.id], rng.random()))
    heading = rng.random() * 360.0
    state = KinematicState(0.0, 0.0, 0.0, altitude, velocity, heading, *controls, bins)
    return index, state


def sample_initial(model: Model, constraints: SamplingConstraints | None, rng: UniformSource) -> KinematicState:
    """Rejection-sample an initial state whose altitude and velocity fall inside ``constraints``.

    Raises:
        RejectionBudgetExceeded: ``constraints.max_attempts`` consecutive rejections,
            or constraints that cannot intersect the model's altitude/velocity range.
    """
    return _sample_initial(model, constraints or SamplingConstraints(), rng)[1]


def step(model: CompiledModel, state: KinematicState, rng: UniformSource, dt: float = DEFAULT_DT_S) -> KinematicState:
    """Advance ``state`` by one time step of ``dt`` seconds."""
    if isinstance(model, BlendedModel):
        raise TypeError("step a blend through the component chosen by sample_initial or generate")
    roles = model.roles
    alt_var, vel_var, acc_var, vr_var, tr_var = roles

    new_bins = sample_bins(model.transition, rng, state.bins)
    acc = 0.0 if acc_var is None else dediscretize(acc_var, new_bins[acc_var.id], rng.random())
    vr = 0.0 if vr_var is None else dediscretize(vr_var, new_bins[vr_var.id], rng.random())
    tr = 0.0 if tr_var is None else dediscretize(tr_var, new_bins[tr_var.id], rng.random())

    v_fps = state.velocity * KT_TO_FPS
    hdg = math.radians(state.heading)
    north = state.north + v_fps * math.cos(hdg) * dt
    east = state.east + v_fps * math.sin(hdg) * dt
    velocity = state.velocity + state.acceleration * dt
    altitude = state.altitude + state.vertical_rate * dt / 60.0
    heading = (state.heading + state.turn_rate * dt) % 360.0
    if heading >= 360.0:
        heading = 0.0

    clamped = []
    floor = model.model.altitude_floor
    if altitude < floor:
        altitude = floor
        clamped.append(CLAMP_ALTITUDE_FLOOR)
        if vr < 0:
            vr = 0.0
            new_bins[vr_var.id] = vr_var.bin_of(vr)
    v_lo, v_hi = vel_var.edges[0], vel_var.edges[-1]
    if velocity < v_lo:
        velocity = v_lo
        clamped.append(CLAMP_VELOCITY_LOW)
        if acc < 0:
            acc = 0.0
            new_bins[acc_var.id] = acc_var.bin_of(acc)
    elif velocity > v_hi:
        velocity = v_hi
        clamped.append(CLAMP_VELOCITY_HIGH)
        if acc > 0:
            acc = 0.0
            new_bins[acc_var.id] = acc_var.bin_of(acc)

    bins = dict(state.bins)
    bins.update(new_bins)
    bins[alt_var.id] = alt_var.bin_of(altitude)
    bins[vel_var.id] = vel_var.bin_of(velocity)
    return KinematicState(
        state.t + dt, north, east, altitude, velocity, heading, acc, vr, tr, bins, frozenset(clamped)
    )


def _step_count(duration: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = round(duration / dt)
    if abs(n * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError(f"duration {duration} is not a multiple of dt {dt}")
    return n


def generate(
    model: Model,
    constraints: SamplingConstraints | None = None,
    duration: float = DEFAULT_DURATION_S,
    dt: float = DEFAULT_DT_S,
    rng: UniformSource | None = None,
) -> Trajectory:
    """One trajectory: an initial state followed by ``duration / dt`` steps."""
    if rng is None:
        raise ValueError("generate needs an explicit random stream")
    steps = _step_count(duration, dt)
    index, state = _sample_initial(model, constraints or SamplingConstraints(), rng)
    comp = _components(model)[index]
    states = [state]
    for k in range(1, steps + 1):
        state = step(comp, state, rng, dt)
        state.t = k * dt
        states.append(state)
    return Trajectory(model.name, dt, states, index)


# ---------------------------------------------------------------------------
# many units, deterministic under any worker count


def _run_chunk(args) -> list:
    fn, model, seed, start, stop, kwargs = args
    return [fn(model, seed, i, **kwargs) for i in range(start, stop)]


def _map_units(fn: Callable, model, seed: int, n: int, workers: int, chunk: int, **kwargs) -> Iterator:
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    tasks = [(fn, model, seed, a, b, kwargs) for a, b in bounds]
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield from _run_chunk(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for result in pool.map(_run_chunk, tasks):
            yield from result


def _one_initial(model, seed, i, constraints):
    return sample_initial(model, constraints, streams.substream(seed, i, streams.DOMAIN_SAMPLE))


def _one_trajectory(model, seed, i, constraints, duration, dt, domain):
    return generate(model, constraints, duration, dt, streams.substream(seed, i, domain))


def sample_many(
    model: Model,
    n: int,
    seed: int,
    constraints: SamplingConstraints | None = None,
    workers: int = 1,
    chunk: int = 4096,
) -> Iterator[KinematicState]:
    """Initial states for units ``0..n-1``; unit ``i`` uses substream ``(seed, i)``. Yields in index order."""
    return _map_units(_one_initial, model, seed, n, workers, chunk, constraints=constraints)


def generate_many(
    model: Model,
    n: int,
    seed: int,
    constraints: SamplingConstraints | None = None,
    duration: float = DEFAULT_DURATION_S,
    dt: float = DEFAULT_DT_S,
    workers: int = 1,
    chunk: int = 256,
    domain: int = streams.DOMAIN_GENERATE,
) -> Iterator[Trajectory]:
    """Trajectories for units ``0..n-1``; unit ``i`` uses substream ``(seed, i)``. Yields in index order."""
    _step_count(duration, dt)
    return _map_units(
        _one_trajectory, model, seed, n, workers, chunk,
        constraints=constraints, duration=duration, dt=dt, domain=domain,
    )


def state_row(state: KinematicState) -> list:
    """CSV-ready fields after ``trajectory_id``, matching :data:`CSV_HEADER`."""
    return [
        state.t,
        state.north,
        state.east,
        state.altitude,
        state.velocity,
        state.heading,
        state.acceleration,
        state.vertical_rate,
        state.turn_rate,
        "|".join(sorted(state.clamped)),
    ]


CSV_HEADER: Sequence[str] = (
    "trajectory_id",
    "time_s",
    "north_ft",
    "east_ft",
    "altitude_ft_agl",
    "velocity_kt",
    "heading_deg",
    "acceleration_kt_s",
    "vertical_rate_ft_min",
    "turn_rate_deg_s",
    "clamped",
)
