"""Line-oriented text formats for SPNs, ADDs and BN bundles, plus DOT export.

SPN documents hold one record per line; ``#`` starts a comment::

    spn <name>
    var <name> <domain_size>
    node <id> sum | prod | ind <var> <value> | dist <var> <p0> <p1> ...
    edge <parent> <child> [weight]        # weight required on sum edges
    root <id>

Value indices are 0-based.  For Boolean variables index 0 is the positive
literal ``x`` and index 1 is its negation, so tables list ``x`` first.

A BN bundle starts with ``bn <name>`` and declares ``obs <var> <domain>``,
``hidden <name> <domain>``, ``edge <hidden> <var>`` and ``order <h> ...``,
followed by one ``add <var> ... end`` block per CPD.  Blocks reuse the node
and edge records with the kinds ``test <hidden>``, ``real <v>``,
``dist <var> <p0> ...``, ``opsum`` and ``opprod``; an optional trailing
``src=<id>`` records which SPN node a diagram node came from.
"""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Tuple

from . import _graph
from .add import Add, AddNode, OpProduct, OpSum, TerminalDistLeaf, TerminalReal, VarNode
from .bn import BayesNet, HiddenVar
from .errors import ParseError, StructureError
from .spn_core import DIST, INDICATOR, PRODUCT, SUM, SpnGraph, SpnNode, Variable


def fmt(x: float) -> str:
    return format(float(x), ".17g")


class _Lines:
    """Tokenized, comment-stripped lines with 1-based positions."""

    def __init__(self, text: str):
        self.rows: List[Tuple[int, List[Tuple[int, str]]]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0]
            toks, i = [], 0
            while i < len(body):
                if body[i].isspace():
                    i += 1
                    continue
                j = i
                while j < len(body) and not body[j].isspace():
                    j += 1
                toks.append((i + 1, body[i:j]))
                i = j
            if toks:
                self.rows.append((lineno, toks))


def _err(msg, code, line, col=1):
    return ParseError(msg, code, line=line, column=col)


def _int(tok, line):
    col, text = tok
    try:
        return int(text)
    except ValueError:
        raise _err(f"expected an integer, got {text!r}", "E202", line, col) from None


def _float(tok, line):
    col, text = tok
    try:
        v = float(text)
    except ValueError:
        raise _err(f"expected a number, got {text!r}", "E202", line, col) from None
    if not math.isfinite(v):
        raise _err(f"non-finite number {text!r}", "E202", line, col)
    return v


def _arity(toks, n, line, usage):
    if len(toks) != n:
        raise _err(f"expected `{usage}`", "E201", line, toks[0][0])


# -- SPN ------------------------------------------------------------------------


def parse_spn(text: str) -> SpnGraph:
    """Parse an SPN document; references may precede declarations."""
    lines = _Lines(text)
    name, root, root_line = None, None, None
    variables: List[Variable] = []
    var_lines: Dict[str, int] = {}
    nodes: Dict[int, SpnNode] = {}
    node_lines: Dict[int, int] = {}
    edges: List[Tuple[int, int, int, Optional[float], int]] = []

    for line, toks in lines.rows:
        head = toks[0][1]
        if head == "spn":
            if name is not None:
                raise _err("duplicate `spn` header", "E203", line)
            if len(toks) > 2:
                raise _err("expected `spn <name>`", "E201", line)
            name = toks[1][1] if len(toks) == 2 else "spn"
            continue
        if name is None:
            raise _err("document must start with `spn <name>`", "E201", line)
        if head == "var":
            _arity(toks, 3, line, "var <name> <domain_size>")
            vname = toks[1][1]
            if vname in var_lines:
                raise _err(f"duplicate variable {vname!r} (first declared on line {var_lines[vname]})", "E111", line, toks[1][0])
            d = _int(toks[2], line)
            if d < 2:
                raise _err(f"domain size of {vname} must be at least 2", "E112", line, toks[2][0])
            variables.append(Variable(vname, d))
            var_lines[vname] = line
        elif head == "node":
            if len(toks) < 3:
                raise _err("expected `node <id> <kind> ...`", "E201", line)
            nid = _int(toks[1], line)
            if nid in nodes:
                raise _err(f"duplicate node id {nid} (first declared on line {node_lines[nid]})", "E102", line, toks[1][0])
            kind = toks[2][1]
            if kind in (SUM, PRODUCT):
                _arity(toks, 3, line, f"node <id> {kind}")
                nodes[nid] = SpnNode(nid, kind)
            elif kind == INDICATOR:
                _arity(toks, 5, line, "node <id> ind <var> <value>")
                nodes[nid] = SpnNode(nid, INDICATOR, var=toks[3][1], value=_int(toks[4], line))
            elif kind == DIST:
                if len(toks) < 6:
                    raise _err("expected `node <id> dist <var> <p0> <p1> ...`", "E201", line)
                probs = tuple(_float(t, line) for t in toks[4:])
                nodes[nid] = SpnNode(nid, DIST, var=toks[3][1], probs=probs)
            else:
                raise _err(f"unknown node kind {kind!r}", "E201", line, toks[2][0])
            node_lines[nid] = line
        elif head == "edge":
            if len(toks) not in (3, 4):
                raise _err("expected `edge <parent> <child> [weight]`", "E201", line)
            p, c = _int(toks[1], line), _int(toks[2], line)
            w = _float(toks[3], line) if len(toks) == 4 else None
            edges.append((p, c, line, w, toks[3][0] if len(toks) == 4 else toks[0][0]))
        elif head == "root":
            _arity(toks, 2, line, "root <id>")
            if root is not None:
                raise _err(f"duplicate root declaration (first on line {root_line})", "E203", line)
            root, root_line = _int(toks[1], line), line
        else:
            raise _err(f"unknown record {head!r}", "E201", line, toks[0][0])

    if name is None:
        raise _err("empty document; expected `spn <name>`", "E201", 1)
    if root is None:
        raise _err("missing `root` declaration", "E103", len(text.splitlines()) or 1)
    if root not in nodes:
        raise _err(f"root {root} is not a declared node", "E101", root_line)

    children: Dict[int, List[int]] = {v: [] for v in nodes}
    weights: Dict[int, List[float]] = {v: [] for v, n in nodes.items() if n.kind == SUM}
    edge_line: Dict[Tuple[int, int], int] = {}
    for p, c, line, w, wcol in edges:
        for ref in (p, c):
            if ref not in nodes:
                raise _err(f"edge references unknown node {ref}", "E101", line)
        if (p, c) in edge_line:
            raise _err(f"parallel edge {p} -> {c} (also on line {edge_line[p, c]})", "E109", line)
        edge_line[p, c] = line
        kind = nodes[p].kind
        if kind == SUM:
            if w is None:
                raise _err(f"sum edge {p} -> {c} needs a weight", "E105", line)
            weights[p].append(w)
        elif w is not None:
            raise _err(f"edge {p} -> {c} leaves a {kind} node and cannot carry a weight", "E104", line, wcol)
        if kind in (INDICATOR, DIST):
            raise _err(f"leaf node {p} cannot have children", "E115", line)
        children[p].append(c)

    back = _graph.find_cycle(children, root)
    if back is not None:
        raise _err(f"cycle detected at back edge {back[0]} -> {back[1]}", "E106", edge_line[back])
    for v, n in nodes.items():
        if n.var is not None and n.var not in var_lines:
            raise _err(f"node {v} uses undeclared variable {n.var!r}", "E110", node_lines[v])
    try:
        return SpnGraph(
            [nodes[v] for v in sorted(nodes)], children, weights, root, variables, name=name
        )
    except StructureError as exc:
        node = _node_in(exc.message, nodes)
        raise _err(exc.message, exc.code, node_lines.get(node, root_line)) from None


def _node_in(message, nodes):
    for word in message.replace(",", " ").split():
        if word.isdigit() and int(word) in nodes:
            return int(word)
    return None


def serialize_spn(spn: SpnGraph) -> str:
    out = [f"spn {spn.name}"]
    out += [f"var {v.name} {v.domain_size}" for v in spn.variables]
    for v in sorted(spn.nodes):
        n = spn.nodes[v]
        if n.kind == INDICATOR:
            out.append(f"node {v} ind {n.var} {n.value}")
        elif n.kind == DIST:
            out.append(f"node {v} dist {n.var} " + " ".join(fmt(p) for p in n.probs))
        else:
            out.append(f"node {v} {n.kind}")
    for v in sorted(spn.nodes):
        if spn.nodes[v].kind == SUM:
            out += [f"edge {v} {c} {fmt(w)}" for c, w in zip(spn.children[v], spn.weights[v])]
        else:
            out += [f"edge {v} {c}" for c in spn.children[v]]
    out.append(f"root {spn.root}")
    return "\n".join(out) + "\n"


# -- ADD blocks -----------------------------------------------------------------


def _src(n) -> str:
    s = getattr(n, "source", None)
    return f" src={s}" if s is not None else ""


def serialize_add(a: Add, label: str = "f") -> str:
    """One ``add`` block; shared nodes are emitted once and referenced by id."""
    order = a.nodes()
    ids = {id(n): i for i, n in enumerate(order)}
    out = [f"add {label}"]
    if a.variable_order:
        out.append("order " + " ".join(a.variable_order))
    for n in order:
        i = ids[id(n)]
        if isinstance(n, VarNode):
            out.append(f"node {i} test {n.var}{_src(n)}")
        elif isinstance(n, TerminalReal):
            out.append(f"node {i} real {fmt(n.value)}")
        elif isinstance(n, TerminalDistLeaf):
            out.append(f"node {i} dist {n.var} " + " ".join(fmt(p) for p in n.probs) + _src(n))
        elif isinstance(n, OpSum):
            out.append(f"node {i} opsum{_src(n)}")
        else:
            out.append(f"node {i} opprod")
    for n in order:
        i = ids[id(n)]
        if isinstance(n, OpSum):
            out += [f"edge {i} {ids[id(c)]} {fmt(w)}" for c, w in zip(n.children, n.weights)]
        else:
            out += [f"edge {i} {ids[id(c)]}" for c in n.kids()]
    out.append(f"root {ids[id(a.root)]}")
    out.append("end")
    return "\n".join(out) + "\n"


def _parse_add_block(rows, start) -> Tuple[str, Add, int]:
    line, toks = rows[start]
    _arity(toks, 2, line, "add <var>")
    label = toks[1][1]
    specs: Dict[int, Tuple[str, list, Optional[int], int]] = {}
    edges: Dict[int, List[Tuple[int, Optional[float], int]]] = {}
    order: Tuple[str, ...] = ()
    root = None
    i = start + 1
    while True:
        if i >= len(rows):
            raise _err(f"`add {label}` block is not closed with `end`", "E201", line)
        ln, tk = rows[i]
        head = tk[0][1]
        if head == "end":
            break
        src = None
        if tk[-1][1].startswith("src="):
            src = _int((tk[-1][0] + 4, tk[-1][1][4:]), ln)
            tk = tk[:-1]
        if head == "node":
            if len(tk) < 3:
                raise _err("expected `node <id> <kind> ...`", "E201", ln)
            nid = _int(tk[1], ln)
            if nid in specs:
                raise _err(f"duplicate node id {nid} in `add {label}`", "E102", ln, tk[1][0])
            kind = tk[2][1]
            if kind == "test":
                _arity(tk, 4, ln, "node <id> test <hidden>")
                args = [tk[3][1]]
            elif kind == "real":
                _arity(tk, 4, ln, "node <id> real <value>")
                args = [_float(tk[3], ln)]
            elif kind == "dist":
                if len(tk) < 6:
                    raise _err("expected `node <id> dist <var> <p0> <p1> ...`", "E201", ln)
                args = [tk[3][1], [_float(t, ln) for t in tk[4:]]]
            elif kind in ("opsum", "opprod"):
                _arity(tk, 3, ln, f"node <id> {kind}")
                args = []
            else:
                raise _err(f"unknown diagram node kind {kind!r}", "E201", ln, tk[2][0])
            specs[nid] = (kind, args, src, ln)
        elif head == "edge":
            if len(tk) not in (3, 4):
                raise _err("expected `edge <parent> <child> [weight]`", "E201", ln)
            p, c = _int(tk[1], ln), _int(tk[2], ln)
            w = _float(tk[3], ln) if len(tk) == 4 else None
            edges.setdefault(p, []).append((c, w, ln))
        elif head == "order":
            order = tuple(t for _, t in tk[1:])
        elif head == "root":
            _arity(tk, 2, ln, "root <id>")
            root = _int(tk[1], ln)
        else:
            raise _err(f"unknown record {head!r} in `add {label}`", "E201", ln, tk[0][0])
        i += 1
    if root is None:
        raise _err(f"`add {label}` has no root", "E103", line)
    for p, es in edges.items():
        for c, _, ln in es:
            for ref in (p, c):
                if ref not in specs:
                    raise _err(f"edge references unknown node {ref}", "E101", ln)
            kind = specs[p][0]
            if kind in ("real", "dist"):
                raise _err(f"leaf node {p} cannot have children", "E115", ln)
    if root not in specs:
        raise _err(f"root {root} is not a declared node", "E101", line)
    back = _graph.find_cycle({p: [c for c, _, _ in es] for p, es in edges.items()}, root)
    if back is not None:
        ln = next(l for c, _, l in edges[back[0]] if c == back[1])
        raise _err(f"cycle detected at back edge {back[0]} -> {back[1]}", "E106", ln)

    built: Dict[int, AddNode] = {}
    kid_map = {p: [c for c, _, _ in es] for p, es in edges.items()}
    for nid in _graph.bottom_up_order(kid_map, _graph.reachable(kid_map, root)):
        kind, args, src, ln = specs[nid]
        es = edges.get(nid, [])
        kids = [built[c] for c, _, _ in es]
        if kind == "opsum":
            if any(w is None for _, w, _ in es):
                raise _err(f"opsum edge from {nid} needs a weight", "E105", ln)
            built[nid] = OpSum(kids, [w for _, w, _ in es], src)
        else:
            bad = next((l for _, w, l in es if w is not None), None)
            if bad is not None:
                raise _err(f"edge from {kind} node {nid} cannot carry a weight", "E104", bad)
            if kind == "test":
                if len(kids) < 2:
                    raise _err(f"test node {nid} needs one child per value", "E108", ln)
                built[nid] = VarNode(args[0], kids, src)
            elif kind == "opprod":
                if not kids:
                    raise _err(f"opprod node {nid} has no children", "E108", ln)
                built[nid] = OpProduct(kids)
            elif kind == "real":
                built[nid] = TerminalReal(args[0])
            else:
                built[nid] = TerminalDistLeaf(args[0], args[1], src)
    return label, Add(built[root], order), i


def parse_add(text: str) -> Add:
    rows = _Lines(text).rows
    if not rows or rows[0][1][0][1] != "add":
        raise _err("expected an `add <var>` block", "E201", rows[0][0] if rows else 1)
    _, a, end = _parse_add_block(rows, 0)
    if end + 1 < len(rows):
        raise _err("trailing records after `end`", "E201", rows[end + 1][0])
    return a


# -- BN bundles -----------------------------------------------------------------


def serialize_bn(bn: BayesNet) -> str:
    out = [f"bn {bn.name}"]
    out += [f"obs {x.name} {x.domain_size}" for x in bn.observable_vars]
    out += [f"hidden {h.name} {h.domain_size}" for h in bn.hidden_vars]
    out += [f"edge {h} {x}" for h, x in bn.edges]
    out.append("order" + "".join(f" {h}" for h in bn.hidden_order))
    text = "\n".join(out) + "\n"
    for name in [x.name for x in bn.observable_vars] + [h.name for h in bn.hidden_vars]:
        text += serialize_add(bn.cpds[name], name)
    return text


def parse_bn(text: str) -> BayesNet:
    rows = _Lines(text).rows
    name = None
    obs: List[Variable] = []
    hidden: List[HiddenVar] = []
    edges: List[Tuple[str, str]] = []
    order = None
    cpds: Dict[str, Add] = {}
    i = 0
    while i < len(rows):
        line, toks = rows[i]
        head = toks[0][1]
        if head == "bn":
            if name is not None:
                raise _err("duplicate `bn` header", "E203", line)
            name = toks[1][1] if len(toks) > 1 else "bn"
        elif name is None:
            raise _err("document must start with `bn <name>`", "E201", line)
        elif head == "obs":
            _arity(toks, 3, line, "obs <var> <domain_size>")
            d = _int(toks[2], line)
            if d < 2:
                raise _err(f"domain size of {toks[1][1]} must be at least 2", "E112", line, toks[2][0])
            obs.append(Variable(toks[1][1], d))
        elif head == "hidden":
            _arity(toks, 3, line, "hidden <name> <domain_size>")
            hname = toks[1][1]
            src = hname[2:] if hname.startswith("H_") else ""
            if not src.isdigit():
                raise _err(f"hidden variable names look like H_<node id>, got {hname!r}", "E201", line, toks[1][0])
            hidden.append(HiddenVar(hname, _int(toks[2], line), int(src)))
        elif head == "edge":
            _arity(toks, 3, line, "edge <hidden> <var>")
            edges.append((toks[1][1], toks[2][1]))
        elif head == "order":
            if order is not None:
                raise _err("duplicate `order` record", "E203", line)
            order = tuple(t for _, t in toks[1:])
        elif head == "add":
            label, a, i = _parse_add_block(rows, i)
            if label in cpds:
                raise _err(f"duplicate CPD for {label}", "E203", line)
            cpds[label] = a
        else:
            raise _err(f"unknown record {head!r}", "E201", line, toks[0][0])
        i += 1
    if name is None:
        raise _err("empty document; expected `bn <name>`", "E201", 1)
    if order is None:
        raise _err("missing `order` record", "E103", rows[-1][0])
    obs_names = {x.name for x in obs}
    hid_names = {h.name for h in hidden}
    for h, x in edges:
        if h not in hid_names or x not in obs_names:
            raise _err(f"edge {h} -> {x} references an undeclared variable", "E110", rows[-1][0])
    for v in obs_names | hid_names:
        if v not in cpds:
            raise _err(f"no CPD given for {v}", "E105", rows[-1][0])
    for label in cpds:
        if label not in obs_names | hid_names:
            raise _err(f"CPD for undeclared variable {label}", "E110", rows[-1][0])
    if sorted(order) != sorted(hid_names):
        raise _err("`order` must list every hidden variable exactly once", "E201", rows[-1][0])
    return BayesNet(tuple(hidden), tuple(obs), tuple(edges), cpds, order, 0, name=name)


# -- DOT ------------------------------------------------------------------------


def _q(s) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _short(x: float) -> str:
    return format(x, ".6g")


def export_dot(obj) -> str:
    if isinstance(obj, SpnGraph):
        return _dot_spn(obj)
    if isinstance(obj, BayesNet):
        return _dot_bn(obj)
    if isinstance(obj, Add):
        return _dot_add(obj)
    raise TypeError(f"cannot render {type(obj).__name__} as DOT")


def _dot_spn(spn: SpnGraph) -> str:
    out = [f"digraph {_q(spn.name)} {{", "  node [fontname=Helvetica];"]
    for v in sorted(spn.nodes):
        n = spn.nodes[v]
        if n.kind == SUM:
            out.append(f'  n{v} [label="+", shape=circle];')
        elif n.kind == PRODUCT:
            out.append(f'  n{v} [label="×", shape=circle];')
        elif n.kind == INDICATOR:
            out.append(f"  n{v} [label={_q(f'I[{n.var}={n.value}]')}, shape=box];")
        else:
            probs = ", ".join(_short(p) for p in n.probs)
            out.append(f"  n{v} [label={_q(f'{n.var}: ({probs})')}, shape=box];")
    for v in sorted(spn.nodes):
        if spn.nodes[v].kind == SUM:
            out += [f'  n{v} -> n{c} [label="{_short(w)}"];' for c, w in zip(spn.children[v], spn.weights[v])]
        else:
            out += [f"  n{v} -> n{c};" for c in spn.children[v]]
    out.append("}")
    return "\n".join(out) + "\n"


def _dot_bn(bn: BayesNet) -> str:
    out = [f"digraph {_q(bn.name)} {{", "  node [fontname=Helvetica];"]
    out.append("  { rank=same; " + " ".join(f"{_q(h.name)} [shape=circle];" for h in bn.hidden_vars) + " }")
    out.append(
        "  { rank=same; " + " ".join(f"{_q(x.name)} [shape=doublecircle];" for x in bn.observable_vars) + " }"
    )
    out += [f"  {_q(h)} -> {_q(x)};" for h, x in bn.edges]
    out.append("}")
    return "\n".join(out) + "\n"


def _dot_add(a: Add) -> str:
    order = a.nodes()
    ids = {id(n): i for i, n in enumerate(order)}
    out = ["digraph add {", "  node [fontname=Helvetica];"]
    for n in order:
        i = ids[id(n)]
        if isinstance(n, VarNode):
            out.append(f"  a{i} [label={_q(n.var)}, shape=ellipse];")
        elif isinstance(n, TerminalReal):
            out.append(f'  a{i} [label="{_short(n.value)}", shape=box];')
        elif isinstance(n, TerminalDistLeaf):
            probs = ", ".join(_short(p) for p in n.probs)
            out.append(f"  a{i} [label={_q(f'{n.var}: ({probs})')}, shape=box];")
        elif isinstance(n, OpSum):
            out.append(f'  a{i} [label="⊕", shape=circle];')
        else:
            out.append(f'  a{i} [label="⊗", shape=circle];')
    for n in order:
        i = ids[id(n)]
        if isinstance(n, VarNode):
            out += [f'  a{i} -> a{ids[id(c)]} [label="{k}"];' for k, c in enumerate(n.children)]
        elif isinstance(n, OpSum):
            out += [f'  a{i} -> a{ids[id(c)]} [label="{_short(w)}"];' for c, w in zip(n.children, n.weights)]
        else:
            out += [f"  a{i} -> a{ids[id(c)]};" for c in n.kids()]
    out.append("}")
    return "\n".join(out) + "\n"
