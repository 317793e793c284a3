"""Command-line interface.

Exit status: 0 all properties hold, 1 a violation was found, 2 usage, parse
or prerequisite error, 3 a resource limit was hit.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import REPORT_SCHEMA, __version__
from .checker import ResourceError, check_safety
from .model import ModelError
from .oracle import bounded_inclusion, bounded_simulates
from .rules import DeltaVector, apply_r1, apply_r2, apply_r3
from .syntax import (ParseError, dump_tree, load_model, load_tree, parse_plan, parse_property,
                     unparse_model, write_report)
from .tree import annotate, build_tree, refine_node, traverse_bfs

OK, VIOLATED, USAGE, RESOURCE = 0, 1, 2, 3


class CliError(Exception):
    pass


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise CliError(f"{path}: file not found") from None
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _model(path):
    return load_model(_read(path), str(path))


def _prop(path):
    return parse_property(_read(path), str(path))


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pick_automaton(net, name):
    if name:
        return net.automaton(name)
    env = net.environment()
    if len(env) != 1:
        raise CliError("the model has several environment automata; choose one with --automaton")
    return env[0]


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    net = _model(args.model)
    for extra in args.compose or ():
        net = net.compose(_model(extra))
    prop = _prop(args.property)
    v = check_safety(net, prop, max_states=args.max_states)
    if args.report:
        _write(args.report, write_report(v, "json", prop))
    sys.stdout.write(write_report(v, "text", prop))
    return OK if v.satisfied else VIOLATED


def cmd_abstract(args) -> int:
    net = _model(args.model)
    a = _pick_automaton(net, args.automaton)
    if args.rule == "r1":
        try:
            guard = tuple((addr, c, int(d.lstrip("-"))) for addr, c, d in args.guard or ())
            inv = tuple((*loc.split(".", 1), c, int(d.lstrip("+"))) for loc, c, d in args.inv or ())
        except ValueError:
            raise CliError("deltas must be natural numbers") from None
        if any(len(x) != 4 for x in inv):
            raise CliError("--inv expects AUTOMATON.LOCATION CLOCK DELTA")
        out = net.replace_automaton(apply_r1(a, DeltaVector(guard, inv)))
    elif args.rule == "r2":
        if not args.merge:
            raise CliError("r2 needs --with OTHER.ta")
        other = _model(args.merge).automaton(a.name)
        out = net.replace_automaton(apply_r2(a, other))
    else:
        if not args.channel:
            raise CliError("r3 needs --channel NAME")
        out = apply_r3(net, args.channel, only={a.name})
    _write(args.output, unparse_model(out))
    return OK


def cmd_tree_build(args) -> int:
    plan_path = Path(args.plan)
    plan = parse_plan(_read(plan_path), str(plan_path))
    base_dir = Path(args.base_dir) if args.base_dir else plan_path.parent
    bases = {s.output: _model(base_dir / s.parameters) for s in plan.steps if s.rule == "base"}
    tree = build_tree(bases, plan, args.abstract)
    _write(args.output, dump_tree(tree))
    return OK


def cmd_tree_traverse(args) -> int:
    tree = load_tree(_read(args.tree), args.tree)
    system = _model(args.system)
    prop = _prop(args.property)
    report = traverse_bfs(tree, system, prop, jobs=args.jobs, force_all=args.force_all,
                          max_states=args.max_states)
    if args.report:
        _write(args.report, write_report(report, "json"))
    sys.stdout.write(write_report(report, "text"))
    return OK if report.satisfied else VIOLATED


def _verdicts_from_report(path) -> dict:
    try:
        data = json.loads(_read(path))
        return {n["id"]: n.get("forced_verdict", n["verdict"]) for n in data["nodes"]}
    except (ValueError, KeyError, TypeError):
        raise CliError(f"{path}: not a traversal report") from None


def cmd_refine(args) -> int:
    tree = load_tree(_read(args.tree), args.tree)
    if args.report:
        verdicts = _verdicts_from_report(args.report)
        for nid, node in tree.nodes.items():
            v = verdicts.get(nid)
            node.verdict = v if v in ("satisfied", "violated") else None
    elif args.system or args.property:
        if not (args.system and args.property):
            raise CliError("--system and --property must be given together")
        report = traverse_bfs(tree, _model(args.system), _prop(args.property),
                              max_states=args.max_states)
        tree = annotate(tree, report)
    proposals = refine_node(tree, args.node)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for p in proposals:
        ivs = ", ".join(f"{addr} {c} in [{lo},{hi}]" for addr, c, lo, hi in p.intervals)
        text = f"# refinement of {p.parent}: {ivs}\n" + unparse_model(p.model)
        (out / f"{p.id}.ta").write_text(text)
        print(f"{p.id}: {ivs}")
    if not proposals:
        print(f"{args.node}: the satisfied children cover every interval; nothing to propose")
    return OK


def cmd_oracle_include(args) -> int:
    a, b = _model(args.a), _model(args.b)
    try:
        step = Fraction(args.step)
        horizon = Fraction(args.horizon)
    except (ValueError, ZeroDivisionError):
        raise CliError("--horizon and --step must be rationals such as 10 or 1/2") from None
    ok, word = bounded_inclusion(a, b, horizon, step)
    if ok:
        print(f"included up to horizon {horizon} at step {step}")
    else:
        print(f"not included: {word}")
    if args.simulation:
        sim = bounded_simulates(b, a, horizon, step)
        print(f"simulation: {'yes' if sim else 'no'}")
        ok = ok and sim
    return OK if ok else VIOLATED


def cmd_selftest(args) -> int:
    from .gen import GenConfig, theorem_suite
    summary = theorem_suite(GenConfig(seed=args.seed), args.trials, progress=print)
    for line in summary.lines()[len(summary.trials):]:
        print(line)
    for f in summary.failures[:5]:
        print(f)
    return OK if summary.ok else VIOLATED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tamc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version",
                    version=f"tamc {__version__} (report schema {REPORT_SCHEMA})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="check a safety property on a closed model")
    p.add_argument("model")
    p.add_argument("property")
    p.add_argument("--compose", action="append", metavar="MODEL.ta",
                   help="compose further model files (repeatable)")
    p.add_argument("--report", metavar="OUT.json")
    p.add_argument("--max-states", type=int)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("abstract", help="apply one abstraction rule")
    p.add_argument("model")
    p.add_argument("--rule", choices=("r1", "r2", "r3"), required=True)
    p.add_argument("--automaton", help="automaton to abstract (default: the only environment one)")
    p.add_argument("--guard", nargs=3, action="append", metavar=("EDGE", "CLOCK", "DELTA"))
    p.add_argument("--inv", nargs=3, action="append", metavar=("AUT.LOC", "CLOCK", "DELTA"))
    p.add_argument("--with", dest="merge", metavar="OTHER.ta")
    p.add_argument("--channel")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_abstract)

    tree = sub.add_parser("tree", help="build or traverse abstraction trees")
    tsub = tree.add_subparsers(dest="tree_command", required=True)
    p = tsub.add_parser("build")
    p.add_argument("plan")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--base-dir", help="directory of base model files (default: next to the plan)")
    p.add_argument("--abstract", help="abstracted automaton (overrides the plan)")
    p.set_defaults(func=cmd_tree_build)
    p = tsub.add_parser("traverse")
    p.add_argument("tree")
    p.add_argument("system")
    p.add_argument("property")
    p.add_argument("--report", metavar="OUT.json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-states", type=int)
    p.add_argument("--force-all", action="store_true", help="also check nodes skipped by pruning")
    p.set_defaults(func=cmd_tree_traverse)

    p = sub.add_parser("refine", help="propose base models by subtraction")
    p.add_argument("tree")
    p.add_argument("node")
    p.add_argument("-o", "--output", required=True, metavar="DIR")
    p.add_argument("--report", help="traversal report supplying node verdicts")
    p.add_argument("--system")
    p.add_argument("--property")
    p.add_argument("--max-states", type=int)
    p.set_defaults(func=cmd_refine)

    oracle = sub.add_parser("oracle", help="bounded language checks")
    osub = oracle.add_subparsers(dest="oracle_command", required=True)
    p = osub.add_parser("include")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--horizon", required=True)
    p.add_argument("--step", default="1")
    p.add_argument("--simulation", action="store_true", help="also check bounded simulation")
    p.set_defaults(func=cmd_oracle_include)

    p = sub.add_parser("selftest", help="run the rule soundness suite")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except ResourceError as exc:
        print(f"tamc: resource limit: {exc}", file=sys.stderr)
        return RESOURCE
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return USAGE
    except (CliError, ModelError, ValueError) as exc:
        print(f"tamc: {exc}", file=sys.stderr)
        return USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
