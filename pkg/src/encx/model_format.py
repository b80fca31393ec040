"""Encounter-model file format: domain types, parser, validator and canonical serializer.

A model file is a single UTF-8 JSON document::

    {
      "name": ..., "source": "rades" | "opensky" | "other",
      "squawk_criteria": "only_1200" | "excluded_1200" | "unknown",
      "aircraft_type": ..., "altitude_floor_ft_agl": 50,
      "smoothing_alpha": 0,
      "variables": [{"id", "name", "kind", "units", "labels" | "edges"}, ...],
      "initial_network": [{"variable", "parents", "table"}, ...],
      "transition_network": [{"variable", "parents", "table"}, ...]
    }

CPT tables are flat, row-major: one row per parent-bin combination with the
last listed parent varying fastest, child bins contiguous within a row.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Iterable, Sequence

from encx.errors import ModelSyntaxError, SchemaError, ValidationError

SOURCES = ("rades", "opensky", "other")
SQUAWK_CRITERIA = ("only_1200", "excluded_1200", "unknown")
UNITS = ("ft_agl", "kt", "kt_per_s", "ft_per_min", "deg_per_s", "none")

# Kinematic roles are identified by units; each may appear at most once per model.
ALTITUDE_UNITS = "ft_agl"
VELOCITY_UNITS = "kt"
CONTROL_UNITS = ("kt_per_s", "ft_per_min", "deg_per_s")
ROLE_UNITS = (ALTITUDE_UNITS, VELOCITY_UNITS) + CONTROL_UNITS

_TOP_REQUIRED = (
    "name",
    "source",
    "squawk_criteria",
    "aircraft_type",
    "altitude_floor_ft_agl",
    "variables",
    "initial_network",
    "transition_network",
)
_TOP_OPTIONAL = ("smoothing_alpha",)
_TOP_ORDER = _TOP_REQUIRED[:5] + ("smoothing_alpha",) + _TOP_REQUIRED[5:]


@dataclass(frozen=True)
class VariableSpec:
    """One model variable, either categorical (labels) or binned (numeric edges)."""

    id: str
    name: str
    kind: str
    units: str = "none"
    labels: tuple[str, ...] = ()
    edges: tuple[float, ...] = ()

    @property
    def bin_count(self) -> int:
        if self.kind == "categorical":
            return len(self.labels)
        return len(self.edges) - 1

    @property
    def is_binned(self) -> bool:
        return self.kind == "binned"

    def bin_labels(self) -> tuple[str, ...]:
        """Human-readable label per bin; binned bins render as ``[lo, hi)``, the last one closed."""
        if self.kind == "categorical":
            return self.labels
        out = []
        n = self.bin_count
        for i in range(n):
            close = "]" if i == n - 1 else ")"
            out.append(f"[{format_number(self.edges[i])}, {format_number(self.edges[i + 1])}{close}")
        return tuple(out)

    def bin_of(self, value: float) -> int:
        """Bin index holding ``value``; values outside the edges fall into the nearest end bin."""
        edges = self.edges
        if value < edges[1]:
            return 0
        if value >= edges[-2]:
            return len(edges) - 2
        lo, hi = 1, len(edges) - 2
        # invariant: edges[lo] <= value < edges[hi]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if value >= edges[mid]:
                lo = mid
            else:
                hi = mid
        return lo


@dataclass(frozen=True)
class NetworkNode:
    variable: str
    parents: tuple[str, ...]
    table: tuple[float, ...]


@dataclass(frozen=True)
class EncounterModel:
    name: str
    source: str
    squawk_criteria: str
    aircraft_type: str
    altitude_floor: float
    variables: tuple[VariableSpec, ...]
    initial_network: tuple[NetworkNode, ...]
    transition_network: tuple[NetworkNode, ...]
    smoothing_alpha: float = 0.0
    _by_id: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {v.id: v for v in self.variables})

    def variable(self, var_id: str) -> VariableSpec:
        try:
            return self._by_id[var_id]
        except KeyError:
            raise KeyError(f"model {self.name!r} has no variable {var_id!r}") from None

    @property
    def variable_ids(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables)

    def by_units(self, units: str) -> VariableSpec | None:
        """The variable carrying ``units``, or None. Only meaningful for kinematic units."""
        for v in self.variables:
            if v.units == units:
                return v
        return None

    @property
    def control_variables(self) -> tuple[VariableSpec, ...]:
        return tuple(v for v in self.variables if v.units in CONTROL_UNITS)


# ---------------------------------------------------------------------------
# number rendering


def format_number(x: float) -> str:
    """Shortest round-trip decimal in positional notation (never exponent form)."""
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return format(Decimal(repr(x)), "f")


# ---------------------------------------------------------------------------
# parsing


def _reject_constant(name):
    raise ModelSyntaxError(f"non-finite number {name} is not allowed")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise SchemaError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_keys(obj, required: Iterable[str], optional: Iterable[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    required, optional = set(required), set(optional)
    missing = required - obj.keys()
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")
    extra = obj.keys() - required - optional
    if extra:
        raise SchemaError(f"{where}: unknown field(s) {sorted(extra)}")


def _string(obj, key, where) -> str:
    val = obj[key]
    if not isinstance(val, str):
        raise SchemaError(f"{where}: field {key!r} must be a string")
    return val


def _number(val, where) -> float:
    if not _is_number(val):
        raise SchemaError(f"{where}: expected a number, got {val!r}")
    out = float(val)
    if not math.isfinite(out):
        raise ValidationError(f"{where}: number {val!r} is not finite")
    return out


def _list(obj, key, where) -> list:
    val = obj[key]
    if not isinstance(val, list):
        raise SchemaError(f"{where}: field {key!r} must be an array")
    return val


def _parse_variable(obj, index: int) -> VariableSpec:
    where = f"variables[{index}]"
    if isinstance(obj, dict) and isinstance(obj.get("id"), str):
        where = f"variable {obj['id']!r}"
    kind = obj.get("kind") if isinstance(obj, dict) else None
    payload = "labels" if kind == "categorical" else "edges"
    _check_keys(obj, ("id", "name", "kind", "units", payload), (), where)
    var_id = _string(obj, "id", where)
    name = _string(obj, "name", where)
    kind = _string(obj, "kind", where)
    units = _string(obj, "units", where)
    if kind not in ("categorical", "binned"):
        raise SchemaError(f"{where}: kind must be 'categorical' or 'binned', got {kind!r}")
    if units not in UNITS:
        raise SchemaError(f"{where}: unknown units {units!r}")
    if kind == "categorical":
        labels = _list(obj, "labels", where)
        if not all(isinstance(s, str) for s in labels):
            raise SchemaError(f"{where}: labels must be strings")
        return VariableSpec(var_id, name, kind, units, labels=tuple(labels))
    edges = tuple(_number(e, f"{where} edges") for e in _list(obj, "edges", where))
    return VariableSpec(var_id, name, kind, units, edges=edges)


def _parse_node(obj, index: int, network: str) -> NetworkNode:
    where = f"{network}[{index}]"
    if isinstance(obj, dict) and isinstance(obj.get("variable"), str):
        where = f"{network} node {obj['variable']!r}"
    _check_keys(obj, ("variable", "parents", "table"), (), where)
    variable = _string(obj, "variable", where)
    parents = _list(obj, "parents", where)
    if not all(isinstance(p, str) for p in parents):
        raise SchemaError(f"{where}: parents must be variable ids")
    table = tuple(_number(w, f"{where} table") for w in _list(obj, "table", where))
    return NetworkNode(variable, tuple(parents), table)


def parse_model(document: bytes | str) -> EncounterModel:
    """Parse and validate a model document.

    Raises:
        ModelSyntaxError: the document is not valid UTF-8 JSON.
        SchemaError: fields are missing, unknown, duplicated or mistyped.
        ValidationError: a model invariant is violated; the message names the
            offending variable or node.
    """
    if isinstance(document, (bytes, bytearray)):
        try:
            document = bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelSyntaxError(f"document is not UTF-8: {exc}") from None
    try:
        raw = json.loads(document, parse_constant=_reject_constant, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(f"malformed JSON: {exc}") from None
    return model_from_dict(raw)


def model_from_dict(raw: Any) -> EncounterModel:
    """Build a validated model from an already-decoded JSON object."""
    _check_keys(raw, _TOP_REQUIRED, _TOP_OPTIONAL, "model")
    where = "model"
    name = _string(raw, "name", where)
    source = _string(raw, "source", where)
    squawk = _string(raw, "squawk_criteria", where)
    if source not in SOURCES:
        raise SchemaError(f"model: source must be one of {SOURCES}, got {source!r}")
    if squawk not in SQUAWK_CRITERIA:
        raise SchemaError(f"model: squawk_criteria must be one of {SQUAWK_CRITERIA}, got {squawk!r}")
    model = EncounterModel(
        name=name,
        source=source,
        squawk_criteria=squawk,
        aircraft_type=_string(raw, "aircraft_type", where),
        altitude_floor=_number(raw["altitude_floor_ft_agl"], "model altitude_floor_ft_agl"),
        variables=tuple(_parse_variable(v, i) for i, v in enumerate(_list(raw, "variables", where))),
        initial_network=tuple(
            _parse_node(n, i, "initial_network") for i, n in enumerate(_list(raw, "initial_network", where))
        ),
        transition_network=tuple(
            _parse_node(n, i, "transition_network")
            for i, n in enumerate(_list(raw, "transition_network", where))
        ),
        smoothing_alpha=_number(raw.get("smoothing_alpha", 0), "model smoothing_alpha"),
    )
    validate_model(model)
    return model


# ---------------------------------------------------------------------------
# validation


def _validate_variable(v: VariableSpec) -> None:
    if not v.id:
        raise ValidationError("variable with empty id")
    if v.kind == "categorical":
        if not v.labels:
            raise ValidationError(f"variable {v.id!r}: categorical variable needs at least one label")
        if len(set(v.labels)) != len(v.labels):
            raise ValidationError(f"variable {v.id!r}: labels are not unique")
        if v.units != "none":
            raise ValidationError(f"variable {v.id!r}: categorical variables take units 'none'")
        if v.edges:
            raise ValidationError(f"variable {v.id!r}: categorical variable cannot carry edges")
    elif v.kind == "binned":
        if len(v.edges) < 2:
            raise ValidationError(f"variable {v.id!r}: binned variable needs at least two edges")
        for a, b in zip(v.edges, v.edges[1:]):
            if not b > a:
                raise ValidationError(
                    f"variable {v.id!r}: edges must be strictly increasing ({format_number(a)} then {format_number(b)})"
                )
        if v.labels:
            raise ValidationError(f"variable {v.id!r}: binned variable cannot carry labels")
    else:
        raise ValidationError(f"variable {v.id!r}: unknown kind {v.kind!r}")


def _validate_node(node: NetworkNode, model: EncounterModel, network: str, allow_self: bool) -> None:
    where = f"{network} node {node.variable!r}"
    ids = model._by_id
    if len(set(node.parents)) != len(node.parents):
        raise ValidationError(f"{where}: duplicate parent")
    for p in node.parents:
        if p not in ids:
            raise ValidationError(f"{where}: unknown parent {p!r}")
        if p == node.variable and not allow_self:
            raise ValidationError(f"{where}: variable cannot be its own parent")
    rows = math.prod(ids[p].bin_count for p in node.parents)
    card = ids[node.variable].bin_count
    if len(node.table) != rows * card:
        raise ValidationError(
            f"{where}: table has {len(node.table)} entries, expected {rows} rows x {card} bins = {rows * card}"
        )
    for w in node.table:
        if not (w >= 0 and math.isfinite(w)):
            raise ValidationError(f"{where}: weights must be finite and non-negative, got {w!r}")
    if model.smoothing_alpha == 0:
        for r in range(rows):
            if not any(node.table[r * card : (r + 1) * card]):
                raise ValidationError(f"{where}: row {r} is all zero and smoothing_alpha is 0")


def validate_model(model: EncounterModel) -> None:
    """Check every model invariant, raising ValidationError on the first violation."""
    seen: set[str] = set()
    for v in model.variables:
        _validate_variable(v)
        if v.id in seen:
            raise ValidationError(f"variable {v.id!r}: duplicate id")
        seen.add(v.id)
    for units in ROLE_UNITS:
        holders = [v.id for v in model.variables if v.units == units]
        if len(holders) > 1:
            raise ValidationError(f"variables {holders}: units {units!r} may be used by one variable only")
        if holders and not model.variable(holders[0]).is_binned:
            raise ValidationError(f"variable {holders[0]!r}: kinematic variables must be binned")

    if not (model.smoothing_alpha >= 0 and math.isfinite(model.smoothing_alpha)):
        raise ValidationError(f"model: smoothing_alpha must be finite and >= 0, got {model.smoothing_alpha!r}")

    # initial network: one node per variable, acyclic
    declared = [n.variable for n in model.initial_network]
    for var_id in declared:
        if var_id not in model._by_id:
            raise ValidationError(f"initial_network node {var_id!r}: unknown variable")
    dup = {x for x in declared if declared.count(x) > 1}
    if dup:
        raise ValidationError(f"initial_network node {sorted(dup)[0]!r}: declared more than once")
    missing = [v for v in model.variable_ids if v not in declared]
    if missing:
        raise ValidationError(f"initial_network: no node for variable(s) {missing}")
    for node in model.initial_network:
        _validate_node(node, model, "initial_network", allow_self=False)
    initial_order(model.initial_network)

    # transition network: children are exactly the control variables
    controls = {v.id for v in model.control_variables}
    children = [n.variable for n in model.transition_network]
    for child in children:
        if child not in controls:
            raise ValidationError(f"transition_network node {child!r}: child must be a control variable")
    if len(set(children)) != len(children) or set(children) != controls:
        raise ValidationError(
            f"transition_network: children {sorted(children)} must be exactly the control variables {sorted(controls)}"
        )
    for node in model.transition_network:
        _validate_node(node, model, "transition_network", allow_self=True)

    altitude = model.by_units(ALTITUDE_UNITS)
    if altitude is not None and model.altitude_floor != altitude.edges[0]:
        raise ValidationError(
            f"variable {altitude.id!r}: altitude_floor_ft_agl {format_number(model.altitude_floor)} "
            f"differs from the lowest altitude edge {format_number(altitude.edges[0])}"
        )
    velocity = model.by_units(VELOCITY_UNITS)
    if velocity is not None and velocity.edges[0] < 0:
        raise ValidationError(f"variable {velocity.id!r}: velocity edges must be non-negative")


def initial_order(nodes: Sequence[NetworkNode]) -> tuple[str, ...]:
    """Topological order of a static network, ties broken by declaration order."""
    sorter = graphlib.TopologicalSorter()
    for node in nodes:
        sorter.add(node.variable, *node.parents)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise ValidationError(f"initial_network node {cycle[0]!r}: cyclic parents {' -> '.join(cycle)}") from None
    rank = {node.variable: i for i, node in enumerate(nodes)}
    order = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready(), key=rank.__getitem__)
        order.extend(ready)
        sorter.done(*ready)
    return tuple(order)


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model: EncounterModel) -> dict:
    """Plain-JSON view of a model with canonical key order."""
    variables = []
    for v in model.variables:
        entry = {"id": v.id, "name": v.name, "kind": v.kind, "units": v.units}
        if v.kind == "categorical":
            entry["labels"] = list(v.labels)
        else:
            entry["edges"] = list(v.edges)
        variables.append(entry)

    def nodes(ns):
        return [{"variable": n.variable, "parents": list(n.parents), "table": list(n.table)} for n in ns]

    values = {
        "name": model.name,
        "source": model.source,
        "squawk_criteria": model.squawk_criteria,
        "aircraft_type": model.aircraft_type,
        "altitude_floor_ft_agl": model.altitude_floor,
        "smoothing_alpha": model.smoothing_alpha,
        "variables": variables,
        "initial_network": nodes(model.initial_network),
        "transition_network": nodes(model.transition_network),
    }
    return {k: values[k] for k in _TOP_ORDER}


def _render(obj, indent: int) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k, ensure_ascii=False)}: {_render(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(not isinstance(x, (dict, list)) for x in obj):
            return "[" + ", ".join(_render(x, indent) for x in obj) + "]"
        items = [pad + "  " + _render(x, indent + 1) for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if _is_number(obj):
        return format_number(obj)
    raise TypeError(f"cannot render {type(obj).__name__}")


def serialize_model(model: EncounterModel) -> bytes:
    """Canonical UTF-8 document for ``model``; equal models give byte-identical output."""
    return (_render(model_to_dict(model), 0) + "\n").encode("utf-8")


def load_model(path) -> EncounterModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def save_model(model: EncounterModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))
