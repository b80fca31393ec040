"""Compiled Bayesian networks: CPT normalization, ancestral sampling and exact enumeration.

Sampling consumes an abstract uniform stream: any object with a ``random()``
method returning floats in [0, 1) works (``random.Random`` or a numpy
``Generator``).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from encx.errors import CapacityError, DegenerateRow
from encx.model_format import (
    ALTITUDE_UNITS,
    VELOCITY_UNITS,
    EncounterModel,
    NetworkNode,
    VariableSpec,
    initial_order,
)

DEFAULT_CELL_BUDGET = 10**8


class UniformSource(Protocol):
    def random(self) -> float: ...


BinAssignment = dict  # variable id -> 0-based bin index


@dataclass(frozen=True, eq=False)
class CompiledNode:
    variable: str
    parents: tuple[str, ...]
    strides: tuple[int, ...]
    card: int
    probs: np.ndarray  # (rows, card), each row sums to 1
    cum_rows: tuple[list[float], ...]  # per-row cumulative sums, +inf past the last positive bin

    @property
    def cum_array(self) -> np.ndarray:
        return np.asarray(self.cum_rows, dtype=float)


@dataclass(frozen=True, eq=False)
class CompiledNetwork:
    """An immutable network ready for sampling.

    ``nodes`` are in sampling (topological) order. ``conditional`` networks read
    parent bins from a caller-supplied assignment instead of from their own draws.
    """

    nodes: tuple[CompiledNode, ...]
    cards: Mapping[str, int]
    labels: Mapping[str, tuple[str, ...]]
    conditional: bool = False

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(n.variable for n in self.nodes)

    def node(self, var_id: str) -> CompiledNode:
        for n in self.nodes:
            if n.variable == var_id:
                return n
        raise KeyError(var_id)


class Roles(NamedTuple):
    """Kinematic variables of a model, located by their units; absent roles are None."""

    altitude: VariableSpec | None
    velocity: VariableSpec | None
    acceleration: VariableSpec | None
    vertical_rate: VariableSpec | None
    turn_rate: VariableSpec | None


@dataclass(frozen=True, eq=False)
class CompiledModel:
    model: EncounterModel
    initial: CompiledNetwork
    transition: CompiledNetwork

    @property
    def name(self) -> str:
        return self.model.name

    @cached_property
    def roles(self) -> Roles:
        m = self.model
        return Roles(
            m.by_units(ALTITUDE_UNITS),
            m.by_units(VELOCITY_UNITS),
            m.by_units("kt_per_s"),
            m.by_units("ft_per_min"),
            m.by_units("deg_per_s"),
        )


@dataclass(frozen=True, eq=False)
class BlendedModel:
    """Mixture of compiled models: every draw first picks a component with probability = weight."""

    name: str
    components: tuple[CompiledModel, ...]
    weights: tuple[float, ...]

    @cached_property
    def _cum(self) -> list[float]:
        return _cumulative(self.weights)

    def choose(self, u: float) -> int:
        """Component index selected by a uniform draw ``u``."""
        return bisect_right(self._cum, u)

    def choose_batch(self, u: np.ndarray) -> np.ndarray:
        return (np.asarray(self._cum)[None, :] <= u[:, None]).sum(axis=1)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probabilities over the joint bins of ``variables``; ``labels`` names the bins per axis."""

    variables: tuple[str, ...]
    probs: np.ndarray
    labels: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.probs.shape != tuple(len(l) for l in self.labels):
            raise ValueError(f"probability shape {self.probs.shape} does not match labels")

    @property
    def total(self) -> float:
        return math.fsum(self.probs.ravel().tolist())


def normalize_row(weights: Sequence[float], alpha: float) -> list[float]:
    """(w_i + alpha) / (sum(w) + alpha * len(w))."""
    total = math.fsum(weights) + alpha * len(weights)
    if total <= 0:
        raise DegenerateRow("row sums to zero with no smoothing")
    return [(w + alpha) / total for w in weights]


def _cumulative(row: Sequence[float]) -> list[float]:
    out = []
    acc = 0.0
    for p in row:
        acc += p
        out.append(acc)
    last = max(i for i, p in enumerate(row) if p > 0)
    # bisect_right never lands beyond the last positive bin, even when rounding leaves acc < 1
    for i in range(last, len(out)):
        out[i] = math.inf
    return out


def _compile_node(node: NetworkNode, model: EncounterModel, network: str) -> CompiledNode:
    card = model.variable(node.variable).bin_count
    pcards = [model.variable(p).bin_count for p in node.parents]
    strides = []
    acc = 1
    for c in reversed(pcards):
        strides.append(acc)
        acc *= c
    strides.reverse()
    rows = acc
    probs = np.empty((rows, card))
    for r in range(rows):
        weights = node.table[r * card : (r + 1) * card]
        try:
            probs[r] = normalize_row(weights, model.smoothing_alpha)
        except DegenerateRow:
            raise DegenerateRow(
                f"{network} node {node.variable!r}: row {r} sums to zero and smoothing_alpha is 0"
            ) from None
    cum_rows = tuple(_cumulative(row) for row in probs.tolist())
    probs.setflags(write=False)
    return CompiledNode(node.variable, node.parents, tuple(strides), card, probs, cum_rows)


def normalize(model: EncounterModel) -> CompiledModel:
    """Normalize every CPT row with the model's additive smoothing and fix sampling order."""
    cards = {v.id: v.bin_count for v in model.variables}
    labels = {v.id: v.bin_labels() for v in model.variables}
    by_var = {n.variable: n for n in model.initial_network}
    order = initial_order(model.initial_network)
    initial = CompiledNetwork(
        tuple(_compile_node(by_var[v], model, "initial_network") for v in order), cards, labels
    )
    transition = CompiledNetwork(
        tuple(_compile_node(n, model, "transition_network") for n in model.transition_network),
        cards,
        labels,
        conditional=True,
    )
    return CompiledModel(model, initial, transition)


def sample_bins(net: CompiledNetwork, rng: UniformSource, given: Mapping[str, int] | None = None) -> BinAssignment:
    """Ancestral sample of one bin assignment, one uniform draw per node in sampling order.

    For a conditional (transition) network, ``given`` supplies the time-t bins
    that parents refer to; the result holds the newly sampled children only.
    """
    out: dict[str, int] = {}
    if net.conditional:
        if given is None:
            raise ValueError("a conditional network needs the current bin assignment")
        src = given
    else:
        src = out
    for node in net.nodes:
        row = 0
        for p, s in zip(node.parents, node.strides):
            row += src[p] * s
        out[node.variable] = bisect_right(node.cum_rows[row], rng.random())
    return out


def sample_bins_batch(
    net: CompiledNetwork,
    n: int,
    generator: np.random.Generator,
    given: Mapping[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Vectorized ancestral sampling of ``n`` assignments; returns one int array per variable."""
    out: dict[str, np.ndarray] = {}
    src = given if net.conditional else out
    for node in net.nodes:
        row = np.zeros(n, dtype=np.int64)
        for p, s in zip(node.parents, node.strides):
            row += np.asarray(src[p], dtype=np.int64) * s
        u = generator.random(n)
        cum = node.cum_array[row]
        out[node.variable] = (cum <= u[:, None]).sum(axis=1)
    return out


def exact_joint(
    net: CompiledNetwork,
    variables: Sequence[str],
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> DiscreteDistribution:
    """Exact joint over ``variables`` by enumerating the full network joint and summing out the rest."""
    if net.conditional:
        raise ValueError("exact_joint needs a static (initial) network")
    variables = tuple(variables)
    order = net.variables
    unknown = [v for v in variables if v not in order]
    if unknown:
        raise KeyError(f"variables not in network: {unknown}")
    if len(set(variables)) != len(variables):
        raise ValueError("duplicate variables in subset")
    shape = tuple(net.cards[v] for v in order)
    cells = math.prod(shape)
    if cells > cell_budget:
        raise CapacityError(f"full joint has {cells} cells, budget is {cell_budget}")

    axis = {v: i for i, v in enumerate(order)}
    joint = np.ones(shape)
    for node in net.nodes:
        own = node.parents + (node.variable,)
        cpt = node.probs.reshape(tuple(net.cards[v] for v in own))
        perm = sorted(range(len(own)), key=lambda k: axis[own[k]])
        cpt = cpt.transpose(perm)
        bshape = [1] * len(order)
        for k in perm:
            bshape[axis[own[k]]] = net.cards[own[k]]
        joint = joint * cpt.reshape(bshape)

    drop = tuple(i for i, v in enumerate(order) if v not in variables)
    marg = joint.sum(axis=drop) if drop else joint
    kept = [v for v in order if v in variables]
    marg = marg.transpose([kept.index(v) for v in variables])
    return DiscreteDistribution(variables, marg, tuple(net.labels[v] for v in variables))
