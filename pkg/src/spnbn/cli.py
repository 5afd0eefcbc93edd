"""Command line front end: ``spnbn <command> ...``.

Exit status is 0 on success, 1 when a checked property fails, and 2 for
unreadable input or bad usage.  Errors are printed as one line starting
with ``error[CODE]:``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import formats
from .bn import bn_size, to_bn, treewidth_lower_bound
from .errors import ParseError, SpnError, StructureError
from .harness import MODES, GenConfig, generate
from .normal_form import to_normal
from .spn_core import MAX_ENUM_VARS, TOLERANCE, SpnGraph, partition_function, query, size_metrics, validate
from .ve import eliminate, roundtrip, symbolic_to_spn

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(SpnError):
    code = "E900"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_spn(path) -> SpnGraph:
    return formats.parse_spn(_read(path))


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _num(x: float) -> str:
    return format(x, ".17g")


def parse_evidence(spec: str, spn: SpnGraph) -> Dict[str, int]:
    """``X1=0,X2=!x2`` style evidence; ``xN``/``!xN`` are Boolean sugar."""
    out: Dict[str, int] = {}
    if not spec:
        return out
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"evidence item {item!r} is not VAR=value")
        name, value = (s.strip() for s in item.split("=", 1))
        if name not in spn.var_map:
            raise UsageError(f"evidence names unknown variable {name!r}")
        d = spn.var_map[name].domain_size
        negated = value.startswith("!")
        literal = value[1:] if negated else value
        if literal.lower() == name.lower():
            if d != 2:
                raise UsageError(f"literal syntax needs a Boolean variable; {name} has {d} values")
            idx = 1 if negated else 0
        elif not negated and literal.isdigit():
            idx = int(literal)
        else:
            raise UsageError(f"cannot read value {value!r} for {name}")
        if not 0 <= idx < d:
            raise UsageError(f"value {idx} is out of range for {name} (domain {d})")
        out[name] = idx
    return out


def _kind_of(text: str) -> str:
    for raw in text.splitlines():
        body = raw.split("#", 1)[0].split()
        if body:
            return body[0]
    return ""


# -- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    spn = _load_spn(args.file)
    rep = validate(spn, args.tolerance)
    for k, v in rep.flags().items():
        print(f"{k}: {str(v).lower()}")
    for node, prop, detail in rep.offending_nodes:
        print(f"offending node {node}: {prop}: {detail}")
    ok = rep.normal if args.normal else rep.complete and rep.consistent
    return EXIT_OK if ok else EXIT_FAIL


def cmd_normalize(args) -> int:
    normal, trace = to_normal(_load_spn(args.file))
    _emit(formats.serialize_spn(normal), args.output)
    if args.trace:
        for p in trace.passes:
            print(
                f"# {p.name}: +{p.nodes_added}/-{p.nodes_removed} nodes, "
                f"+{p.edges_added}/-{p.edges_removed} edges, size {p.size_before} -> {p.size_after}",
                file=sys.stderr,
            )
    return EXIT_OK


def cmd_to_bn(args) -> int:
    spn = _load_spn(args.file)
    if not validate(spn, args.tolerance).normal:
        spn, _ = to_normal(spn)
    _emit(formats.serialize_bn(to_bn(spn)), args.output)
    return EXIT_OK


def cmd_recover(args) -> int:
    bn = formats.parse_bn(_read(args.file))
    spn = symbolic_to_spn(eliminate(bn), bn.observable_vars, name=bn.name)
    _emit(formats.serialize_spn(spn), args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    spn = _load_spn(args.file)
    ev = parse_evidence(args.evidence, spn)
    value = query(spn, ev)
    z = partition_function(spn)
    print(f"unnormalized: {_num(value)}")
    print(f"normalized: {_num(value / z) if z > 0 else 'undefined'}")
    return EXIT_OK


def cmd_partition(args) -> int:
    print(_num(partition_function(_load_spn(args.file))))
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    rep = roundtrip(_load_spn(args.file), args.tolerance, args.max_enum_vars)
    print(rep.render())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_gen(args) -> int:
    seed = args.seed if args.gen_seed is None else args.gen_seed
    cfg = GenConfig(args.vars, args.nodes, args.fanout, seed, args.mode, args.max_domain)
    try:
        spn = generate(cfg)
    except StructureError as exc:
        raise UsageError(exc.message) from None
    _emit(formats.serialize_spn(spn), args.output)
    return EXIT_OK


def cmd_stats(args) -> int:
    spn = _load_spn(args.file)
    m = size_metrics(spn)
    print(f"nodes: {m.node_count}")
    print(f"edges: {m.edge_count}")
    print(f"size: {m.size}")
    print(f"height: {m.height}")
    rep = validate(spn, args.tolerance)
    if rep.complete and rep.consistent:
        normal = spn if rep.normal else to_normal(spn)[0]
        bn = to_bn(normal)
        tw = treewidth_lower_bound(bn, normal)
        sz = bn_size(bn, normal)
        if normal is not spn:
            print(f"normal_size: {size_metrics(normal).size}")
        print(f"hidden_vars: {len(bn.hidden_vars)}")
        print(f"max_in_degree: {tw.max_in_degree}")
        print(f"treewidth_lower_bound: {tw.bound}")
        print(f"floor_half_height: {tw.floor_half_height}")
        print(f"bn_graph_size: {sz.graph_size}")
        print(f"bn_add_size: {sz.total_add_size}")
        print(f"bn_size_bound: {sz.bound_rhs} ({'holds' if sz.holds else 'VIOLATED'})")
    return EXIT_OK


def cmd_dot(args) -> int:
    text = _read(args.file)
    kind = _kind_of(text)
    if kind == "spn":
        obj = formats.parse_spn(text)
    elif kind == "bn":
        bn = formats.parse_bn(text)
        if args.cpd and args.cpd not in bn.cpds:
            raise UsageError(f"bundle has no CPD for {args.cpd!r}")
        obj = bn.cpds[args.cpd] if args.cpd else bn
    elif kind == "add":
        obj = formats.parse_add(text)
    else:
        raise ParseError("unrecognized document; expected `spn`, `bn` or `add` header", "E201", line=1, column=1)
    _emit(formats.export_dot(obj), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spnbn", description="SPN normal forms, SPN to BN conversion and recovery.")
    p.add_argument("--tolerance", type=float, default=TOLERANCE, help="distribution equality tolerance")
    p.add_argument("--max-enum-vars", type=int, default=MAX_ENUM_VARS, help="cap for brute-force tables")
    p.add_argument("--seed", type=int, default=0, help="default RNG seed")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help_, file=True, output=False):
        s = sub.add_parser(name, help=help_)
        if file:
            s.add_argument("file", help="input document ('-' for stdin)")
        if output:
            s.add_argument("-o", "--output", help="write here instead of stdout")
        s.set_defaults(func=fn)
        return s

    cmd("validate", cmd_validate, "print property flags").add_argument(
        "--normal", action="store_true", help="fail unless the SPN is normal"
    )
    cmd("normalize", cmd_normalize, "write an equivalent normal SPN", output=True).add_argument(
        "--trace", action="store_true", help="print per-pass statistics to stderr"
    )
    cmd("to-bn", cmd_to_bn, "write the BN bundle", output=True)
    cmd("recover", cmd_recover, "recover an SPN from a BN bundle", output=True)
    cmd("eval", cmd_eval, "evaluate under evidence").add_argument(
        "--evidence", default="", help="comma separated VAR=value items"
    )
    cmd("partition", cmd_partition, "print the partition function")
    cmd("roundtrip", cmd_roundtrip, "run SPN -> BN -> SPN and check it")
    g = cmd("gen", cmd_gen, "generate a random SPN", file=False, output=True)
    g.add_argument("--vars", type=int, required=True)
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--seed", dest="gen_seed", type=int, default=None)
    g.add_argument("--mode", choices=MODES, default=MODES[0])
    g.add_argument("--fanout", type=int, default=3)
    g.add_argument("--max-domain", type=int, default=2)
    cmd("stats", cmd_stats, "size metrics and BN diagnostics")
    cmd("dot", cmd_dot, "render as Graphviz DOT", output=True).add_argument(
        "--cpd", help="for a BN bundle, render this CPD instead of the graph"
    )
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ParseError, UsageError) as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_USAGE
    except SpnError as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
