"""Model comparison: aligned histograms, histogram-intersection overlap, and blending.

Overlap between two distributions on a common bin scheme is the histogram
intersection ``100 * sum_b min(pA(b), pB(b))``. For equal sample counts this
is the fraction of draws from either model that landed in the same bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from encx import streams
from encx.bayes import (
    DEFAULT_CELL_BUDGET,
    BlendedModel,
    CompiledModel,
    DiscreteDistribution,
    exact_joint,
    normalize,
    sample_bins_batch,
)
from encx.errors import EmptySampleError, IncompatibleModels, SchemeMismatch
from encx.model_format import CONTROL_UNITS, EncounterModel, VariableSpec, format_number
from encx.trajectory import (
    DEFAULT_DT_S,
    KinematicState,
    SamplingConstraints,
    Trajectory,
    generate_many,
)

SIGNIFICANT_THRESHOLD = 85.0
POOR_THRESHOLD = 50.0

MARGINAL = "marginal"
TRANSITION = "transition"

Model = CompiledModel | BlendedModel


def classify(overlap_pct: float) -> str:
    """``significant`` at >= 85 %, ``poor`` at <= 50 %, ``moderate`` in between."""
    if overlap_pct >= SIGNIFICANT_THRESHOLD:
        return "significant"
    if overlap_pct <= POOR_THRESHOLD:
        return "poor"
    return "moderate"


@dataclass(frozen=True)
class OverlapResult:
    dependent: str
    independent: str
    overlap: float
    classification: str
    n_a: int | None
    n_b: int | None
    mode: str
    alignment_note: str = ""

    def to_dict(self) -> dict:
        return {
            "dependent": self.dependent,
            "independent": self.independent,
            "overlap_pct": self.overlap,
            "classification": self.classification,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "mode": self.mode,
            "alignment_note": self.alignment_note,
        }


# ---------------------------------------------------------------------------
# alignment


@dataclass(frozen=True)
class VariableAlignment:
    """Common bin scheme for one variable and, per source model, native bin -> common bin."""

    variable: str
    labels: tuple[str, ...]
    maps: tuple[np.ndarray, ...]
    note: str = ""


@dataclass(frozen=True, eq=False)
class BinAlignment:
    models: tuple[CompiledModel, ...]
    variables: Mapping[str, VariableAlignment] = field(default_factory=dict)

    def index_of(self, model: CompiledModel) -> int:
        for i, m in enumerate(self.models):
            if m is model:
                return i
        raise KeyError(f"model {model.name!r} is not part of this alignment")

    def map(self, var_id: str, model: CompiledModel) -> np.ndarray:
        return self.variables[var_id].maps[self.index_of(model)]

    def labels(self, var_ids: Sequence[str]) -> tuple[tuple[str, ...], ...]:
        return tuple(self.variables[v].labels for v in var_ids)

    @property
    def notes(self) -> dict[str, str]:
        return {v: a.note for v, a in self.variables.items() if a.note}


def _interval_labels(edges: Sequence[float]) -> tuple[str, ...]:
    n = len(edges) - 1
    return tuple(
        f"[{format_number(edges[i])}, {format_number(edges[i + 1])}{']' if i == n - 1 else ')'}" for i in range(n)
    )


def align_variable(var_id: str, specs: Sequence[VariableSpec]) -> VariableAlignment:
    """Common scheme for the same variable as declared by several models.

    Categorical labels are matched by name (unmatched labels keep their own
    bin). Binned variables keep only edges shared by every model plus the
    overall extremes, so each native bin maps into exactly one common bin; a
    lower floor in one model therefore becomes a bin where the others have
    no mass.
    """
    kinds = {s.kind for s in specs}
    units = {s.units for s in specs}
    if len(kinds) != 1 or len(units) != 1:
        raise IncompatibleModels(f"variable {var_id!r}: kinds {sorted(kinds)} / units {sorted(units)} differ")
    if kinds == {"categorical"}:
        labels: list[str] = []
        for s in specs:
            labels.extend(l for l in s.labels if l not in labels)
        maps = tuple(np.array([labels.index(l) for l in s.labels], dtype=np.int64) for s in specs)
        note = "" if all(s.labels == specs[0].labels for s in specs) else f"{var_id}: union of labels"
        return VariableAlignment(var_id, tuple(labels), maps, note)

    if all(s.edges == specs[0].edges for s in specs):
        edges = list(specs[0].edges)
        note = ""
    else:
        shared = set(specs[0].edges)
        for s in specs[1:]:
            shared &= set(s.edges)
        shared.add(min(s.edges[0] for s in specs))
        shared.add(max(s.edges[-1] for s in specs))
        edges = sorted(shared)
        note = f"{var_id}: common edges {[format_number(e) for e in edges]}"
    common = np.asarray(edges)
    maps = tuple(
        np.searchsorted(common, np.asarray(s.edges[:-1]), side="right").astype(np.int64) - 1 for s in specs
    )
    return VariableAlignment(var_id, _interval_labels(edges), maps, note)


def components(model: Model) -> tuple[tuple[float, CompiledModel], ...]:
    if isinstance(model, BlendedModel):
        return tuple(zip(model.weights, model.components))
    return ((1.0, model),)


def align(models: Sequence[Model], variables: Sequence[str] | None = None) -> BinAlignment:
    """Alignment over every component of ``models`` for ``variables`` (default: all shared ids)."""
    comps: list[CompiledModel] = []
    for m in models:
        for _, c in components(m):
            if not any(c is x for x in comps):
                comps.append(c)
    if variables is None:
        variables = [v for v in comps[0].model.variable_ids if all(v in c.model.variable_ids for c in comps)]
    out = {}
    for v in variables:
        missing = [c.name for c in comps if v not in c.model.variable_ids]
        if missing:
            raise IncompatibleModels(f"variable {v!r} is missing from {missing}")
        out[v] = align_variable(v, [c.model.variable(v) for c in comps])
    return BinAlignment(tuple(comps), out)


# ---------------------------------------------------------------------------
# histograms and overlap


def _columns(samples, variables: Sequence[str]) -> dict[str, np.ndarray]:
    if isinstance(samples, Mapping):
        return {v: np.asarray(samples[v], dtype=np.int64) for v in variables}
    rows: list[Mapping[str, int]] = []
    for s in samples:
        if isinstance(s, Trajectory):
            rows.extend(st.bins for st in s.states)
        elif isinstance(s, KinematicState):
            rows.append(s.bins)
        else:
            rows.append(s)
    return {v: np.fromiter((r[v] for r in rows), dtype=np.int64, count=len(rows)) for v in variables}


def _count(codes: Sequence[np.ndarray], shape: tuple[int, ...]) -> np.ndarray:
    flat = np.ravel_multi_index(tuple(codes), shape)
    return np.bincount(flat, minlength=math.prod(shape)).reshape(shape).astype(float)


def histogram(
    samples,
    variables: Sequence[str],
    alignment: BinAlignment,
    model: CompiledModel | None = None,
) -> DiscreteDistribution:
    """Normalized empirical distribution of ``samples`` over the aligned (joint) bins of ``variables``.

    ``samples`` may be a mapping of variable id -> bin array, an iterable of bin
    assignments, kinematic states, or trajectories (every state is pooled).
    Bins are native to ``model``, which defaults to the alignment's only model.
    """
    variables = tuple(variables)
    if model is None:
        if len(alignment.models) != 1:
            raise ValueError("name the model the samples came from")
        model = alignment.models[0]
    cols = _columns(samples, variables)
    n = len(cols[variables[0]]) if variables else 0
    if n == 0:
        raise EmptySampleError("cannot build a histogram from zero samples")
    codes = [alignment.map(v, model)[cols[v]] for v in variables]
    labels = alignment.labels(variables)
    counts = _count(codes, tuple(len(l) for l in labels))
    return DiscreteDistribution(variables, counts / n, labels)


def overlap(dist_a: DiscreteDistribution, dist_b: DiscreteDistribution) -> float:
    """Histogram intersection of two distributions on the same scheme, as a percentage in [0, 100]."""
    if dist_a.variables != dist_b.variables or dist_a.labels != dist_b.labels:
        raise SchemeMismatch(
            f"schemes differ: {dist_a.variables} {dist_a.probs.shape} vs {dist_b.variables} {dist_b.probs.shape}"
        )
    inter = math.fsum(np.minimum(dist_a.probs, dist_b.probs).ravel().tolist())
    return min(100.0, max(0.0, 100.0 * inter))


def exact_distribution(
    model: Model,
    variables: Sequence[str],
    alignment: BinAlignment,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> DiscreteDistribution:
    """Exact aligned joint of ``variables``; blends are the weighted sum of their components."""
    variables = tuple(variables)
    labels = alignment.labels(variables)
    out = np.zeros(tuple(len(l) for l in labels))
    for w, comp in components(model):
        if w == 0:
            continue
        native = exact_joint(comp.initial, variables, cell_budget).probs
        idx = np.ix_(*[alignment.map(v, comp) for v in variables])
        np.add.at(out, idx, w * native)
    return DiscreteDistribution(variables, out, labels)


def sample_codes(
    model: Model,
    variables: Sequence[str],
    alignment: BinAlignment,
    n: int,
    generator: np.random.Generator,
) -> list[np.ndarray]:
    """``n`` initial-network draws from ``model``, returned as aligned bin codes per variable."""
    comps = components(model)
    if len(comps) == 1:
        counts = [n]
    else:
        chosen = model.choose_batch(generator.random(n))
        counts = np.bincount(chosen, minlength=len(comps)).tolist()
    parts: list[list[np.ndarray]] = [[] for _ in variables]
    for (_, comp), k in zip(comps, counts):
        if k == 0:
            continue
        draws = sample_bins_batch(comp.initial, k, generator)
        for j, v in enumerate(variables):
            parts[j].append(alignment.map(v, comp)[draws[v]])
    return [np.concatenate(p) for p in parts]


def sampled_distribution(
    model: Model,
    variables: Sequence[str],
    alignment: BinAlignment,
    n: int,
    generator: np.random.Generator,
) -> DiscreteDistribution:
    if n <= 0:
        raise EmptySampleError("sample count must be positive")
    variables = tuple(variables)
    labels = alignment.labels(variables)
    codes = sample_codes(model, variables, alignment, n, generator)
    return DiscreteDistribution(variables, _count(codes, tuple(len(l) for l in labels)) / n, labels)


def _generators(rng, count: int) -> list[np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        return [rng] * count
    if isinstance(rng, (tuple, list)):
        return list(rng)
    if rng is None:
        raise ValueError("sampled mode needs a seed or a numpy Generator")
    return [streams.generator(int(rng), i, streams.DOMAIN_COMPARE) for i in range(count)]


def pairwise_overlap(
    model_a: Model,
    model_b: Model,
    dependent: str,
    independent: str | None = None,
    n: int = 10**6,
    rng=None,
    mode: str = "sampled",
    alignment: BinAlignment | None = None,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> OverlapResult:
    """Overlap of the joint (independent, dependent) initial-network distributions of two models.

    ``independent=None`` compares the marginal of ``dependent``. In sampled mode
    ``rng`` is a master seed (model A draws from compare substream 0, model B
    from substream 1), one numpy Generator shared by both, or a pair of them.
    """
    variables = (dependent,) if independent in (None, MARGINAL) else (independent, dependent)
    if alignment is None:
        alignment = align([model_a, model_b], variables)
    if mode == "exact":
        da = exact_distribution(model_a, variables, alignment, cell_budget)
        db = exact_distribution(model_b, variables, alignment, cell_budget)
        n_a = n_b = None
    elif mode == "sampled":
        ga, gb = _generators(rng, 2)
        da = sampled_distribution(model_a, variables, alignment, n, ga)
        db = sampled_distribution(model_b, variables, alignment, n, gb)
        n_a = n_b = n
    else:
        raise ValueError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    pct = overlap(da, db)
    note = "; ".join(alignment.variables[v].note for v in variables if alignment.variables[v].note)
    return OverlapResult(
        dependent, independent or MARGINAL, pct, classify(pct), n_a, n_b, mode, note
    )


def variable_pairs(model: Model) -> list[tuple[str, str | None]]:
    """Every marginal, then every (dependent, independent) pair with the dependent declared later."""
    ids = components(model)[0][1].model.variable_ids
    pairs: list[tuple[str, str | None]] = [(v, None) for v in ids]
    pairs.extend((ids[j], ids[i]) for i in range(len(ids)) for j in range(i + 1, len(ids)))
    return pairs


def all_pairs_overlap(
    model_a: Model,
    model_b: Model,
    pairs: Iterable[tuple[str, str | None]] | None = None,
    n: int = 10**6,
    rng: int | None = None,
    mode: str = "sampled",
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> list[OverlapResult]:
    """:func:`pairwise_overlap` for each pair; sampled pairs ``k`` use compare substreams ``2k`` and ``2k+1``."""
    if pairs is None:
        pairs = variable_pairs(model_a)
    pairs = list(pairs)
    alignment = align([model_a, model_b])
    results = []
    for k, (dep, indep) in enumerate(pairs):
        if mode == "sampled":
            if rng is None:
                raise ValueError("sampled mode needs a seed")
            rng_k = (
                streams.generator(int(rng), 2 * k, streams.DOMAIN_COMPARE),
                streams.generator(int(rng), 2 * k + 1, streams.DOMAIN_COMPARE),
            )
        else:
            rng_k = None
        results.append(
            pairwise_overlap(model_a, model_b, dep, indep, n, rng_k, mode, alignment, cell_budget)
        )
    return results


def transition_overlap(
    model_a: Model,
    model_b: Model,
    variable: str,
    trajectories: int = 10**4,
    duration: float = 180.0,
    dt: float = DEFAULT_DT_S,
    seed: int = 0,
    constraints: SamplingConstraints | None = None,
    workers: int = 1,
) -> OverlapResult:
    """Overlap of a control variable's bins pooled over every state of every generated trajectory.

    Model A flies master seed ``mix(seed, TRANSITION, 0)``, model B ``mix(seed, TRANSITION, 1)``.
    """
    alignment = align([model_a, model_b], [variable])
    for _, comp in components(model_a) + components(model_b):
        if comp.model.variable(variable).units not in CONTROL_UNITS:
            raise IncompatibleModels(f"variable {variable!r} is not a control variable of {comp.name!r}")
    labels = alignment.labels([variable])
    dists = []
    for side, model in enumerate((model_a, model_b)):
        comps = [c for _, c in components(model)]
        maps = [alignment.map(variable, c) for c in comps]
        counts = np.zeros(len(labels[0]))
        total = 0
        sub_seed = streams.mix(seed, streams.DOMAIN_TRANSITION, side)
        for traj in generate_many(model, trajectories, sub_seed, constraints, duration, dt, workers):
            native = np.fromiter((s.bins[variable] for s in traj.states), dtype=np.int64, count=len(traj.states))
            counts += np.bincount(maps[traj.component][native], minlength=len(labels[0]))
            total += len(traj.states)
        if total == 0:
            raise EmptySampleError("no trajectory states to pool")
        dists.append(DiscreteDistribution((variable,), counts / total, labels))
    pct = overlap(*dists)
    return OverlapResult(
        variable, TRANSITION, pct, classify(pct), trajectories, trajectories, "sampled",
        alignment.variables[variable].note,
    )


def blend(models: Sequence[Model | EncounterModel], weights: Sequence[float] | None = None, name: str | None = None) -> BlendedModel:
    """Mixture that picks component ``i`` with probability ``weights[i]`` (equal weights by default).

    Nested blends are flattened.

    Raises:
        IncompatibleModels: the components do not declare the same variables,
            or a shared variable cannot be aligned.
    """
    if not models:
        raise ValueError("blend needs at least one model")
    if weights is None:
        weights = [1.0 / len(models)] * len(models)
    weights = [float(w) for w in weights]
    if len(weights) != len(models):
        raise ValueError(f"{len(models)} models but {len(weights)} weights")
    if any(not (w >= 0 and math.isfinite(w)) for w in weights):
        raise ValueError(f"weights must be finite and non-negative, got {weights}")
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {math.fsum(weights)}")

    flat: list[tuple[float, CompiledModel]] = []
    for m, w in zip(models, weights):
        if isinstance(m, EncounterModel):
            m = normalize(m)
        flat.extend((w * cw, c) for cw, c in components(m))
    ids = set(flat[0][1].model.variable_ids)
    for _, c in flat[1:]:
        if set(c.model.variable_ids) != ids:
            raise IncompatibleModels(
                f"{c.name!r} declares {sorted(c.model.variable_ids)}, expected {sorted(ids)}"
            )
    align([c for _, c in flat])
    if name is None:
        name = "blend(" + ",".join(c.name for _, c in flat) + ")"
    return BlendedModel(name, tuple(c for _, c in flat), tuple(w for w, _ in flat))
