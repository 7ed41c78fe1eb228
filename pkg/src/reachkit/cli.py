"""``reachkit`` command line.

Exit codes are the same for every subcommand: 0 for a positive answer
(reachable, satisfiable, or plain success), 1 for a negative answer
(unreachable, unsatisfiable, grid mismatch) and 2 for errors, including
exhausted budgets.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .core import INPUT, OUTPUT, Network, eval_network
from .formats import ParseError, format_spec, load_network, load_spec, parse_vector, save_network
from .milp import UnboundedInput, encode, export_lp
from .oracle import OracleCapExceeded, boolean_grid_check, reach_bruteforce, sat_bruteforce
from .reductions import (
    REDUCTIONS,
    DimacsError,
    generate,
    load_dimacs,
    load_names,
    reduce_fanin1,
    relu_only_instance,
    save_generated,
    to_relu_only,
)
from .verifier import (
    BudgetExceeded,
    ReachInstance,
    VerifierConfig,
    decide,
    instance_bits,
    witness_bits,
)

EXIT_YES = 0
EXIT_NO = 1
EXIT_ERROR = 2

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "seed", "status"],
    "properties": {
        "command": {"enum": ["solve", "gen", "encode-milp", "eval", "transform", "oracle"]},
        "seed": {"type": "integer"},
        "status": {"type": "string"},
        "verdict": {"enum": ["reachable", "unreachable", "unknown"]},
        "witness": {"type": ["array", "null"], "items": {"type": "string"}},
        "witness_bits": {"type": ["integer", "null"]},
        "instance_bits": {"type": "integer"},
        "weight_alphabet": {"type": "array", "items": {"type": "string"}},
        "layers": {"type": "integer", "minimum": 2},
        "widths": {"type": "array", "items": {"type": "integer"}},
        "stats": {"type": "object"},
        "output": {"type": "array", "items": {"type": "string"}},
        "files": {"type": "object"},
        "error": {"type": "string"},
    },
    "allOf": [
        {
            "if": {"properties": {"command": {"const": "solve"}, "status": {"const": "ok"}}},
            "then": {"required": ["verdict", "witness", "witness_bits", "weight_alphabet", "layers", "stats"]},
        },
        {
            "if": {"properties": {"command": {"const": "gen"}, "status": {"const": "ok"}}},
            "then": {"required": ["weight_alphabet", "layers", "widths", "files"]},
        },
    ],
}


@dataclass
class RunConfig:
    subcommand: str
    inputs: list[str] = field(default_factory=list)
    node_budget: int | None = None
    time_budget_ms: int | None = None
    workers: int = 1
    strict: bool = False
    outputs: list[str] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        for name in ("node_budget", "time_budget_ms"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name.replace('_', '-')} must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


class CliError(Exception):
    pass


def _q(x: Fraction) -> str:
    return str(x)


def _alphabet(net: Network) -> list[str]:
    return [_q(v) for v in sorted(net.weight_alphabet())]


def _structure(net: Network) -> dict:
    return {"layers": net.depth, "widths": net.widths, "weight_alphabet": _alphabet(net)}


def _name_maps(path):
    if not path:
        return None, None, None, None
    meta = load_names(path)
    ins, outs = meta.get("inputs", []), meta.get("outputs", [])
    return ({n: i for i, n in enumerate(ins)}, {n: i for i, n in enumerate(outs)}, ins, outs)


def _load_instance(args) -> tuple[ReachInstance, list | None]:
    in_map, out_map, in_names, _ = _name_maps(getattr(args, "names", None))
    net = load_network(args.network)
    phi_in = load_spec(args.phi_in, INPUT, in_map)
    phi_out = load_spec(args.phi_out, OUTPUT, out_map)
    return ReachInstance(net, phi_in, phi_out), in_names


def _emit(report: dict, args) -> None:
    target = getattr(args, "json", None)
    if not target:
        return
    text = json.dumps(report, indent=2)
    if target == "-":
        print(text)
    else:
        Path(target).write_text(text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    run = RunConfig("solve", [args.network, args.phi_in, args.phi_out], args.node_budget,
                    args.time_budget_ms, args.workers, args.strict, [], args.seed)
    inst, in_names = _load_instance(args)
    config = VerifierConfig(
        node_budget=run.node_budget,
        time_budget_ms=run.time_budget_ms,
        workers=run.workers,
        strict=True if run.strict else None,
        relaxation=args.relaxation,
        order=args.order,
    )
    report = {"command": "solve", "seed": run.seed, "status": "ok",
              "instance_bits": instance_bits(inst), **_structure(inst.network)}
    if args.milp_out:
        try:
            export_lp(encode(inst), args.milp_out)
            report["files"] = {"milp": str(args.milp_out)}
        except (UnboundedInput, ValueError) as exc:
            print(f"warning: MILP not written: {exc}", file=sys.stderr)
    try:
        result = decide(inst, config)
    except BudgetExceeded as exc:
        report.update(status="budget", verdict="unknown", witness=None, witness_bits=None,
                      stats=exc.stats.as_dict(), error=str(exc))
        print(f"UNKNOWN: {exc}")
        _emit(report, args)
        return EXIT_ERROR
    stats = result.stats.as_dict()
    report["stats"] = stats
    if result.reachable:
        bits = witness_bits(result.witness)
        report.update(verdict="reachable", witness=[_q(v) for v in result.witness], witness_bits=bits)
        print("REACHABLE")
        labels = in_names or [f"x{i}" for i in range(len(result.witness))]
        for name, v in zip(labels, result.witness):
            print(f"  {name} = {v}")
        print(f"witness_bits: {bits}")
    else:
        report.update(verdict="unreachable", witness=None, witness_bits=None)
        print("UNREACHABLE")
    print("stats: " + ", ".join(f"{k}={v}" for k, v in stats.items()))
    _emit(report, args)
    return EXIT_YES if result.reachable else EXIT_NO


def cmd_gen(args) -> int:
    formula = load_dimacs(args.dimacs)
    c = Fraction(args.c) if args.c is not None else None
    d = Fraction(args.d) if args.d is not None else None
    if args.reduction == "weights" and (c is None or d is None):
        raise CliError("--reduction weights needs both -c and -d")
    if args.reduction == "nozero" and c is None:
        raise CliError("--reduction nozero needs -c")
    if args.reduction == "fanin1" and args.unboxed:
        gen = reduce_fanin1(formula, box_inputs=False)
        if args.relu_only:
            gen = relu_only_instance(gen)
    else:
        gen = generate(formula, args.reduction, c=c, d=d, relu_only=args.relu_only)
    paths = save_generated(gen, args.out)
    net = gen.instance.network
    summary = _structure(net)
    print(f"reduction: {gen.tag}")
    print(f"variables: {formula.num_vars}, clauses: {formula.num_clauses}")
    print(f"layers: {summary['layers']} (stored {len(net.layers)})")
    print(f"widths: {' '.join(map(str, summary['widths']))}")
    print(f"weight alphabet: {{{', '.join(summary['weight_alphabet'])}}}")
    print("phi_out:")
    for line in format_spec(gen.instance.phi_out, gen.output_names).splitlines():
        print(f"  {line}")
    for role, p in paths.items():
        print(f"wrote {role}: {p}")
    _emit({"command": "gen", "seed": args.seed, "status": "ok", "reduction": gen.tag,
           "files": {k: str(v) for k, v in paths.items()}, **summary}, args)
    return EXIT_YES


def cmd_encode_milp(args) -> int:
    inst, _ = _load_instance(args)
    try:
        milp = encode(inst)
    except UnboundedInput as exc:
        raise CliError(f"cannot encode: input dimension {exc.dimension} is unbounded "
                       f"({exc.side}); big-M constants need a bounded input box") from None
    path = export_lp(milp, args.out)
    print(f"wrote {path}: {len(milp.rows)} rows, {len(milp.continuous)} continuous, "
          f"{len(milp.binaries)} binary")
    _emit({"command": "encode-milp", "seed": args.seed, "status": "ok",
           "files": {"milp": str(path)}, **_structure(inst.network)}, args)
    return EXIT_YES


def cmd_eval(args) -> int:
    net = load_network(args.network)
    x = parse_vector(args.input)
    out = eval_network(net, x)
    print(", ".join(_q(v) for v in out))
    _emit({"command": "eval", "seed": args.seed, "status": "ok",
           "output": [_q(v) for v in out], **_structure(net)}, args)
    return EXIT_YES


def cmd_transform(args) -> int:
    net = load_network(args.network)
    new = to_relu_only(net)
    save_network(new, args.out)
    print(f"wrote {args.out}: layers {new.depth}, widths {' '.join(map(str, new.widths))}")
    _emit({"command": "transform", "seed": args.seed, "status": "ok",
           "files": {"network": str(args.out)}, **_structure(new)}, args)
    return EXIT_YES


def cmd_oracle(args) -> int:
    report = {"command": "oracle", "seed": args.seed, "status": "ok", "mode": args.mode}
    if args.mode == "sat":
        if not args.dimacs:
            raise CliError("--mode sat needs a DIMACS file")
        formula = load_dimacs(args.dimacs)
        model = sat_bruteforce(formula)
        if model is None:
            print("UNSAT")
            report["answer"] = "unsat"
        else:
            print("SAT " + " ".join(str(i + 1 if b else -(i + 1)) for i, b in enumerate(model)))
            report["answer"] = "sat"
        _emit(report, args)
        return EXIT_YES if model is not None else EXIT_NO
    if args.mode == "reach":
        if not (args.network and args.phi_in and args.phi_out):
            raise CliError("--mode reach needs --network, --phi-in and --phi-out")
        inst, _ = _load_instance(args)
        res = reach_bruteforce(inst)
        print(("REACHABLE" if res.reachable else "UNREACHABLE") + f" ({res.phases_checked} phase vectors)")
        if res.witness is not None:
            print("  witness: " + ", ".join(_q(v) for v in res.witness))
        report.update(verdict="reachable" if res.reachable else "unreachable",
                      witness=None if res.witness is None else [_q(v) for v in res.witness])
        _emit(report, args)
        return EXIT_YES if res.reachable else EXIT_NO
    # grid
    if not args.dimacs:
        raise CliError("--mode grid needs a DIMACS file")
    formula = load_dimacs(args.dimacs)
    c = Fraction(args.c) if args.c is not None else None
    d = Fraction(args.d) if args.d is not None else None
    gen = generate(formula, args.reduction, c=c, d=d)
    rep = boolean_grid_check(gen)
    print(f"grid: {rep.agree}/{rep.total} assignments agree")
    for bits, expected, got in rep.mismatches:
        print(f"  mismatch at {''.join('1' if b else '0' for b in bits)}: expected {expected}, got {got}")
    report.update(total=rep.total, agree=rep.agree)
    _emit(report, args)
    return EXIT_YES if rep.ok else EXIT_NO


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reachkit", description="Exact reachability for PWL networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", metavar="PATH", help="write a JSON report ('-' for stdout)")
        sp.add_argument("--seed", type=int, default=0, help="seed recorded in reports")

    def instance(sp):
        sp.add_argument("network")
        sp.add_argument("phi_in")
        sp.add_argument("phi_out")
        sp.add_argument("--names", help="name map JSON written by 'gen'")

    s = sub.add_parser("solve", help="decide reachability")
    instance(s)
    s.add_argument("--node-budget", type=int)
    s.add_argument("--time-budget-ms", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--strict", action="store_true", help="use strict phase bounds everywhere")
    s.add_argument("--relaxation", choices=("hull", "phases"), default="hull")
    s.add_argument("--order", choices=("cone", "layer"), default="cone")
    s.add_argument("--milp-out", metavar="PATH", help="also write the MILP encoding")
    common(s)
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("gen", help="build a reachability instance from a 3-CNF formula")
    g.add_argument("dimacs")
    g.add_argument("--reduction", choices=REDUCTIONS, default="general")
    g.add_argument("-c")
    g.add_argument("-d")
    g.add_argument("--relu-only", action="store_true", help="rewrite hidden identity nodes as ReLU pairs")
    g.add_argument("--unboxed", action="store_true",
                   help="fanin1 only: leave the inputs unconstrained (not a sound reduction)")
    g.add_argument("-o", "--out", required=True, help="output prefix")
    common(g)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("encode-milp", help="write the big-M MILP in LP format")
    instance(e)
    e.add_argument("-o", "--out", required=True)
    common(e)
    e.set_defaults(func=cmd_encode_milp)

    v = sub.add_parser("eval", help="evaluate a network exactly")
    v.add_argument("network")
    v.add_argument("--input", required=True, help='e.g. "1, 0, 1/2"')
    common(v)
    v.set_defaults(func=cmd_eval)

    t = sub.add_parser("transform", help="replace hidden identity nodes by ReLU pairs")
    t.add_argument("network")
    t.add_argument("-o", "--out", required=True)
    common(t)
    t.set_defaults(func=cmd_transform)

    o = sub.add_parser("oracle", help="brute-force reference procedures")
    o.add_argument("--mode", choices=("sat", "reach", "grid"), required=True)
    o.add_argument("dimacs", nargs="?")
    o.add_argument("--network")
    o.add_argument("--phi-in")
    o.add_argument("--phi-out")
    o.add_argument("--names")
    o.add_argument("--reduction", choices=REDUCTIONS, default="general")
    o.add_argument("-c")
    o.add_argument("-d")
    common(o)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    random.seed(args.seed)
    try:
        return args.func(args)
    except (ParseError, DimacsError, CliError, OracleCapExceeded, UnboundedInput,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if getattr(args, "json", None):
            _emit({"command": args.command, "seed": args.seed, "status": "error", "error": str(exc)}, args)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
