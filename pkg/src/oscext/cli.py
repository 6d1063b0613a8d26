"""Batch front end: validate instances, compute index profiles, run and
compare extensions, and reproduce the depth-sweep experiment.

Exit codes: 0 ok, 1 validation failure, 2 precondition failure,
3 invariant violation.  All outputs are a pure function of the arguments
and fixture bytes; the wall-time column of `compare` is emitted only on
request so that default outputs stay byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from .errors import InvariantError, PreconditionError, ValidationError
from .space import (
    AdaptiveScale,
    load_space_file,
    parse_policy,
    space_to_document,
)
from .derive import index_profile
from .extend import (
    glue_extension,
    iterated_extension,
    layered_extension,
    limsup_extension,
    retract_extension,
    scattered_extension,
)
from .instances import block_parity_field, cantor_instance, generate_from_spec

DEFAULT_GRID = [2.0**-j for j in range(1, 9)]
CANTOR_EXTRA = [3.0**-j for j in range(1, 5)]
# Multiplier below 2 resolves consecutive dyadic scales on sequence spaces.
CANTOR_POLICY = AdaptiveScale(1.5)


def _grid_for(space, arg):
    if arg:
        grid = [float(tok) for tok in arg.split(",") if tok.strip()]
    else:
        grid = list(DEFAULT_GRID)
        if space.metric.kind == "cantor":
            grid = sorted(set(grid + CANTOR_EXTRA), reverse=True)
    if not grid or any(b >= a for a, b in zip(grid, grid[1:])) or any(e <= 0 for e in grid):
        raise ValidationError("epsilon grid must be positive and strictly decreasing")
    return grid


def _load_instance(args):
    if bool(args.instance) == bool(args.generate):
        raise ValidationError("exactly one of --instance and --generate is required")
    if args.instance:
        return load_space_file(args.instance)
    return generate_from_spec(args.generate)


def _policy_for(space, args):
    if args.policy:
        return parse_policy(args.policy)
    return CANTOR_POLICY if space.metric.kind == "cantor" else AdaptiveScale(3.0)


def _field_and_subset(space, args):
    name = args.field or "f"
    if name not in space.fields:
        raise ValidationError(f"field {name!r} not found in instance (have {sorted(space.fields)})")
    f = space.fields[name]
    if args.subset:
        if args.subset not in space.subsets:
            raise ValidationError(f"subset {args.subset!r} not found in instance")
        Y = space.subsets[args.subset]
    elif "Y" in space.subsets:
        Y = space.subsets["Y"]
    else:
        Y = f.domain
    return f, Y


def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_validate(args):
    space = _load_instance(args)
    summary = {
        "name": space.name,
        "points": space.n,
        "metric": space.metric.kind,
        "resolution": space.resolution,
        "diameter": space.diameter(),
        "subsets": {k: v.size for k, v in sorted(space.subsets.items())},
        "fields": {k: v.domain.size for k, v in sorted(space.fields.items())},
    }
    _emit(args, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_index(args):
    space = _load_instance(args)
    f, Y = _field_and_subset(space, args)
    P = Y & f.domain
    policy = _policy_for(space, args)
    grid = _grid_for(space, args.epsilon_grid)
    profile = index_profile(f, P, policy, grid)
    rows = profile.csv_rows()
    if args.format == "json":
        payload = [
            {"epsilon": e.epsilon, "index": e.index, "level_sizes": e.level_sizes}
            for e in profile.entries
        ]
        _emit(args, json.dumps({"policy": policy.describe(), "entries": payload},
                               sort_keys=True, indent=2) + "\n")
    else:
        _emit(args, _csv_text(["epsilon", "index", "level_sizes"], rows))
    return 0


_METHODS = ("glue", "iterated", "layered", "limsup", "scattered", "retract")


def _run_method(method, space, Y, f, policy, args):
    if method == "glue":
        eps = args.epsilon if args.epsilon is not None else 0.5
        return glue_extension(space, Y, f, eps, policy)
    if method == "iterated":
        return iterated_extension(space, Y, f, policy, args.rounds)
    if method == "layered":
        return layered_extension(space, Y, f, policy, args.max_layers)
    if method == "limsup":
        return limsup_extension(space, Y, f)
    if method == "scattered":
        return scattered_extension(space, Y, f, policy)
    if method == "retract":
        return retract_extension(space, f.restrict(Y & f.domain))
    raise ValidationError(f"unknown method {method!r} (expected one of {_METHODS})")


def cmd_extend(args):
    space = _load_instance(args)
    f, Y = _field_and_subset(space, args)
    policy = _policy_for(space, args)
    if args.method not in _METHODS:
        raise ValidationError(f"unknown method {args.method!r} (expected one of {_METHODS})")
    report = _run_method(args.method, space, Y, f, policy, args)
    fields = dict(space.fields)
    fields[f"F_{args.method}"] = report.field
    doc = space_to_document(space, space.subsets, fields)
    payload = {"instance": doc, "report": report.to_dict()}
    _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"method={args.method} patch_magnitude={report.patch_magnitude!r} "
          f"assertion_log={'empty' if not report.assertion_log else report.assertion_log}",
          file=sys.stderr)
    return 0


def cmd_compare(args):
    space = _load_instance(args)
    f, Y = _field_and_subset(space, args)
    policy = _policy_for(space, args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise ValidationError("compare needs at least two methods")
    grid = _grid_for(space, args.epsilon_grid)
    rows = []
    for method in methods:
        started = time.monotonic()
        report = _run_method(method, space, Y, f, policy, args)
        elapsed_ms = (time.monotonic() - started) * 1000.0
        profile = index_profile(report.field, space.full_mask(), policy, grid)
        for entry in profile.entries:
            row = [method, repr(entry.epsilon),
                   "SATURATED" if entry.saturated else str(entry.index),
                   repr(report.patch_magnitude)]
            if args.timings:
                row.append(f"{elapsed_ms:.1f}")
            rows.append(row)
    header = ["method", "epsilon", "index", "patch_magnitude"]
    if args.timings:
        header.append("wall_ms")
    if args.format == "json":
        payload = [dict(zip(header, row)) for row in rows]
        _emit(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        _emit(args, _csv_text(header, rows))
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    table = "\n".join(
        "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths))
        for row in [header] + rows
    )
    print(table, file=sys.stderr)
    return 0


def cmd_ex1(args):
    depths = [int(tok) for tok in args.depths.split(",") if tok.strip()]
    if not depths:
        raise ValidationError("at least one depth is required")
    blocks = {}
    for depth in depths:
        space = cantor_instance(depth)
        Y = space.subsets["Y"]
        f = block_parity_field(space)
        grid = _grid_for(space, args.epsilon_grid)
        block = {}
        for method, report in (
            ("layered", layered_extension(space, Y, f, CANTOR_POLICY, args.max_layers)),
            ("limsup", limsup_extension(space, Y, f)),
        ):
            profile = index_profile(report.field, space.full_mask(), CANTOR_POLICY, grid)
            block[method] = {
                "indices": [
                    {"epsilon": e.epsilon, "index": e.index} for e in profile.entries
                ],
                "patch_magnitude": report.patch_magnitude,
            }
        blocks[str(depth)] = block
    if args.format == "csv":
        rows = []
        for depth in depths:
            for method in ("layered", "limsup"):
                for e in blocks[str(depth)][method]["indices"]:
                    label = "SATURATED" if e["index"] is None else str(e["index"])
                    rows.append([depth, method, repr(e["epsilon"]), label])
        _emit(args, _csv_text(["depth", "method", "epsilon", "index"], rows))
    else:
        _emit(args, json.dumps(blocks, sort_keys=True, indent=2) + "\n")
    return 0


def _add_common(p):
    p.add_argument("--instance", help="path to an instance JSON document")
    p.add_argument("--generate", help="generator spec, e.g. cantor:8, ordinal:2, random:7:200:2")
    p.add_argument("--field", help="field name (default 'f')")
    p.add_argument("--subset", help="subset name playing Y")
    p.add_argument("--epsilon-grid", dest="epsilon_grid", help="comma-separated, strictly decreasing")
    p.add_argument("--policy", help="fixed:DELTA or adaptive:MULT")
    p.add_argument("--epsilon", type=float, help="single epsilon (glue)")
    p.add_argument("--max-layers", dest="max_layers", type=int, default=24)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--emit-plot-data", dest="emit_plot", action="store_true",
                   help="accepted for compatibility; outputs are already plain x/y series")


def build_parser():
    parser = argparse.ArgumentParser(prog="oscext", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("validate", cmd_validate), ("index", cmd_index),
                     ("extend", cmd_extend), ("compare", cmd_compare), ("ex1", cmd_ex1)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)
        if name == "extend":
            p.add_argument("--method", required=True)
        if name == "compare":
            p.add_argument("--methods", required=True, help="comma-separated method list")
            p.add_argument("--timings", action="store_true", help="append a wall-time column")
        if name == "ex1":
            p.add_argument("--depths", default="6,8,10")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
