"""``encx`` command line: validate, sample, generate, marginal, compare, blend.

Exit codes: 0 success, 1 invalid model or incompatible inputs, 2 usage error,
3 rejection budget exceeded.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from encx import __version__
from encx.analysis import (
    MARGINAL,
    align,
    all_pairs_overlap,
    components,
    exact_distribution,
    transition_overlap,
    variable_pairs,
)
from encx.analysis import blend as blend_models
from encx.bayes import BlendedModel, CompiledModel, normalize
from encx.errors import EncxError, RejectionBudgetExceeded
from encx.model_format import format_number, load_model
from encx.trajectory import (
    CSV_HEADER,
    DEFAULT_MAX_ATTEMPTS,
    SamplingConstraints,
    generate_many,
    sample_many,
    state_row,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_REJECTION = 3

WORKERS_ENV = "ENCX_WORKERS"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# model loading


def load_any(path: str | os.PathLike) -> CompiledModel | BlendedModel:
    """Load a model file, or a blend descriptor written by ``encx blend``."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    raw = path.read_bytes()
    try:
        head = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        head = None
    if isinstance(head, dict) and set(head) == {"blend"}:
        spec = head["blend"]
        models = [load_any(path.parent / c["model"]) for c in spec["components"]]
        weights = [c["weight"] for c in spec["components"]]
        return blend_models(models, weights, spec.get("name"))
    return normalize(load_model(path))


def _model_names(model) -> list[str]:
    return [c.name for _, c in components(model)]


# ---------------------------------------------------------------------------
# output helpers


def _num(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _open_out(path: str | None):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


def _metadata(args, models) -> dict:
    meta = {
        "tool": "encx",
        "version": __version__,
        "command": args.command,
        "models": models,
    }
    for key in ("n", "seed", "duration", "dt", "mode", "trajectories"):
        val = getattr(args, key, None)
        if val is not None:
            meta[key] = val
    constraints = _constraints(args) if hasattr(args, "min_alt") else None
    if constraints is not None:
        meta["altitude_ft_agl"] = list(constraints.altitude) if constraints.altitude else None
        meta["airspeed_kt"] = list(constraints.airspeed) if constraints.airspeed else None
    return meta


def _csv_preamble(fh, meta: dict) -> None:
    fh.write("# " + " ".join(f"{k}={_meta_value(v)}" for k, v in meta.items()) + "\n")


def _meta_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, dict):
        return ";".join(f"{k}:{_meta_value(x)}" for k, x in v.items())
    if isinstance(v, list):
        return ",".join(_meta_value(x) for x in v)
    if isinstance(v, float):
        return format_number(v)
    return str(v)


def _workers(args) -> int:
    if args.workers is not None:
        w = args.workers
    else:
        env = os.environ.get(WORKERS_ENV)
        try:
            w = int(env) if env else 1
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
    if w < 1:
        raise UsageError("workers must be a positive integer")
    return w


def _constraints(args) -> SamplingConstraints:
    def window(lo, hi):
        if lo is None and hi is None:
            return None
        return (-math.inf if lo is None else lo, math.inf if hi is None else hi)

    try:
        return SamplingConstraints(
            window(args.min_alt, args.max_alt), window(args.min_speed, args.max_speed), args.max_attempts
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    model = load_any(args.model)
    for _, comp in components(model):
        m = comp.model
        print(
            f"{args.model}: ok  name={m.name} source={m.source} squawk={m.squawk_criteria} "
            f"type={m.aircraft_type} floor={format_number(m.altitude_floor)} ft AGL "
            f"variables={len(m.variables)} alpha={format_number(m.smoothing_alpha)}"
        )
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_any(args.model)
    constraints = _constraints(args)
    states = sample_many(model, args.n, args.seed, constraints, _workers(args))
    var_ids = components(model)[0][1].model.variable_ids
    with _open_out(args.output) as fh:
        _csv_preamble(fh, _metadata(args, _model_names(model)))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *CSV_HEADER[2:], *(f"bin_{v}" for v in var_ids)])
        for i, s in enumerate(states):
            row = state_row(s)[1:]
            w.writerow([i, *map(_num, row), *(s.bins[v] for v in var_ids)])
    return EXIT_OK


def cmd_generate(args) -> int:
    model = load_any(args.model)
    constraints = _constraints(args)
    try:
        trajectories = generate_many(
            model, args.n, args.seed, constraints, args.duration, args.dt, _workers(args)
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with _open_out(args.output) as fh:
        _csv_preamble(fh, _metadata(args, _model_names(model)))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, traj in enumerate(trajectories):
            for s in traj.states:
                w.writerow([i, *map(_num, state_row(s))])
    return EXIT_OK


def cmd_marginal(args) -> int:
    model = load_any(args.model)
    variables = args.var
    if variables == ["all"]:
        variables = list(components(model)[0][1].model.variable_ids)
    alignment = align([model], variables)
    with _open_out(args.output) as fh:
        _csv_preamble(fh, _metadata(args, _model_names(model)))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "bin", "label", "probability"])
        for v in variables:
            dist = exact_distribution(model, [v], alignment)
            for b, (label, p) in enumerate(zip(dist.labels[0], dist.probs.tolist())):
                w.writerow([v, b, label, repr(p)])
    return EXIT_OK


def _parse_pairs(spec: str, model) -> list[tuple[str, str | None]]:
    if spec == "all":
        return variable_pairs(model)
    pairs = []
    for item in spec.split(","):
        dep, _, indep = item.strip().partition(":")
        if not dep:
            raise UsageError(f"bad pair {item!r}; expected dependent:independent")
        pairs.append((dep, None if indep in ("", MARGINAL) else indep))
    return pairs


def cmd_compare(args) -> int:
    model_a = load_any(args.model_a)
    model_b = load_any(args.model_b)
    if args.mode == "sampled" and args.seed is None:
        raise UsageError("sampled mode needs -seed")
    ids = components(model_a)[0][1].model.variable_ids
    pairs = _parse_pairs(args.pairs, model_a) if args.pairs else []
    for dep, indep in pairs:
        for v in (dep, indep):
            if v is not None and v not in ids:
                raise UsageError(f"unknown variable {v!r}")
    results = all_pairs_overlap(model_a, model_b, pairs, args.n, args.seed, args.mode) if pairs else []
    if args.transition:
        if args.seed is None:
            raise UsageError("-transition needs -seed")
        controls = [v.id for v in components(model_a)[0][1].model.control_variables]
        for var in controls:
            results.append(
                transition_overlap(
                    model_a, model_b, var, args.trajectories, args.duration, args.dt, args.seed,
                    _constraints(args), _workers(args),
                )
            )
    meta = _metadata(args, {"a": _model_names(model_a), "b": _model_names(model_b)})
    notes = align([model_a, model_b]).notes
    meta["alignment_notes"] = notes
    with _open_out(args.output) as fh:
        if args.format == "json":
            doc = {"metadata": meta, "results": [r.to_dict() for r in results]}
            fh.write(json.dumps(doc, indent=2) + "\n")
        else:
            _csv_preamble(fh, {k: v for k, v in meta.items() if k != "alignment_notes"})
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["Dependent Variable", "Independent Variable", "Overlap Percentage", "Classification"])
            for r in results:
                w.writerow([r.dependent, r.independent, f"{r.overlap:.3f}", r.classification])
    return EXIT_OK


def cmd_blend(args) -> int:
    if args.weights:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError:
            raise UsageError(f"bad weights {args.weights!r}") from None
    else:
        weights = [1.0 / len(args.models)] * len(args.models)
    try:
        blended = blend_models([load_any(p) for p in args.models], weights, args.name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.output).resolve().parent if args.output not in (None, "-") else Path.cwd()
    doc = {
        "blend": {
            "name": blended.name,
            "components": [
                {"model": os.path.relpath(Path(p).resolve(), out_dir), "weight": w}
                for p, w in zip(args.models, weights)
            ],
        }
    }
    with _open_out(args.output) as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, *, seed_required: bool = False) -> None:
    p.add_argument("-seed", "--seed", type=_u64, required=seed_required, help="unsigned 64-bit master seed")
    p.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
    p.add_argument("-workers", "--workers", type=int, default=None, help=f"worker processes (env {WORKERS_ENV})")


def _add_constraints(p: argparse.ArgumentParser) -> None:
    p.add_argument("-min-alt", "--min-alt", type=float, default=None, help="ft AGL")
    p.add_argument("-max-alt", "--max-alt", type=float, default=None, help="ft AGL")
    p.add_argument("-min-speed", "--min-speed", type=float, default=None, help="kt")
    p.add_argument("-max-speed", "--max-speed", type=float, default=None, help="kt")
    p.add_argument("-max-attempts", "--max-attempts", type=int, default=DEFAULT_MAX_ATTEMPTS)


def _u64(text: str) -> int:
    val = int(text, 0)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encx",
        description="Sample, generate, inspect and compare encounter models.",
        epilog=" ".join(__doc__.split("\n\n")[1].split()),
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"encx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check a model file", allow_abbrev=False)
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sample", help="rejection-sample initial states (CSV)", allow_abbrev=False)
    p.add_argument("model")
    p.add_argument("-n", type=_positive_int, default=10**6)
    _add_common(p, seed_required=True)
    _add_constraints(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("generate", help="generate trajectories (CSV)", allow_abbrev=False)
    p.add_argument("model")
    p.add_argument("-n", type=_positive_int, default=10**6)
    p.add_argument("-duration", "--duration", type=float, default=180.0, help="seconds")
    p.add_argument("-dt", "--dt", type=float, default=1.0, help="seconds")
    _add_common(p, seed_required=True)
    _add_constraints(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("marginal", help="exact marginal histogram of a variable (CSV)", allow_abbrev=False)
    p.add_argument("model")
    p.add_argument("-var", "--var", action="append", required=True, help="variable id (repeatable) or 'all'")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("compare", help="overlap report between two models", allow_abbrev=False)
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("-pairs", "--pairs", default=None, help="'all' or dep:indep[,dep:indep...]")
    p.add_argument("-transition", "--transition", action="store_true", help="add transition-network overlaps")
    p.add_argument("-mode", "--mode", choices=("sampled", "exact"), default="sampled")
    p.add_argument("-n", type=_positive_int, default=10**6, help="initial draws per model")
    p.add_argument("-trajectories", "--trajectories", type=_positive_int, default=10**4)
    p.add_argument("-duration", "--duration", type=float, default=180.0)
    p.add_argument("-dt", "--dt", type=float, default=1.0)
    p.add_argument("-format", "--format", choices=("json", "csv"), default="json")
    _add_common(p)
    _add_constraints(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("blend", help="write a blend descriptor usable as a model", allow_abbrev=False)
    p.add_argument("models", nargs="+")
    p.add_argument("-weights", "--weights", default=None, help="comma-separated, summing to 1")
    p.add_argument("-name", "--name", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_blend)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "compare" and not args.pairs and not args.transition:
        args.pairs = "all"
    stage = args.command
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"encx {stage}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RejectionBudgetExceeded as exc:
        print(f"encx {stage}: rejection sampling failed: {exc}", file=sys.stderr)
        return EXIT_REJECTION
    except EncxError as exc:
        print(f"encx {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyError as exc:
        print(f"encx {stage}: unknown variable {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
