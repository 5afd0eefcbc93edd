"""Rewrite passes that bring a complete, consistent SPN into normal form.

The passes run in this order inside :func:`to_normal`:

``decompose``
    makes every product node decomposable by pulling shared indicators up
    to the offending product, duplicating shared components that are also
    used from outside.
``normalize_weights``
    locally renormalizes the sum weights so every sum node is a mixture.
``contract_unary_sums``
    splices out sum nodes left with a single (weight 1) child.
``reduce_terminal_sums``
    replaces each single-variable sum node by a distribution leaf.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Set

from . import _graph
from .errors import DegenerateError, PreconditionError, StructureError
from .spn_core import (
    DIST,
    INDICATOR,
    PRODUCT,
    SUM,
    SpnGraph,
    SpnNode,
    size_metrics,
    validate,
)

RENORMALIZE_DRIFT = 1e-12


@dataclass
class PassStats:
    name: str
    nodes_added: int = 0
    nodes_removed: int = 0
    edges_added: int = 0
    edges_removed: int = 0
    size_before: int = 0
    size_after: int = 0

    @classmethod
    def between(cls, name, before: SpnGraph, after: SpnGraph) -> "PassStats":
        nb, na = set(before.nodes), set(after.nodes)
        eb, ea = set(before.edges), set(after.edges)
        return cls(
            name,
            nodes_added=len(na - nb),
            nodes_removed=len(nb - na),
            edges_added=len(ea - eb),
            edges_removed=len(eb - ea),
            size_before=size_metrics(before).size,
            size_after=size_metrics(after).size,
        )

    @property
    def is_zero(self):
        return not (self.nodes_added or self.nodes_removed or self.edges_added or self.edges_removed)


@dataclass
class TransformTrace:
    passes: List[PassStats] = field(default_factory=list)

    def add(self, name, before, after):
        self.passes.append(PassStats.between(name, before, after))

    def extend(self, other: "TransformTrace"):
        self.passes.extend(other.passes)

    @property
    def is_zero(self):
        return all(p.is_zero for p in self.passes)

    def __getitem__(self, name) -> PassStats:
        for p in self.passes:
            if p.name == name:
                return p
        raise KeyError(name)


class _Work:
    """Mutable copy of an SpnGraph used while a pass rewrites it."""

    def __init__(self, spn: SpnGraph):
        self.name = spn.name
        self.variables = spn.variables
        self.nodes: Dict[int, SpnNode] = dict(spn.nodes)
        self.children: Dict[int, List[int]] = {v: list(cs) for v, cs in spn.children.items()}
        self.weights: Dict[int, List[float]] = {v: list(ws) for v, ws in spn.weights.items()}
        self.root = spn.root
        self._next = max(self.nodes) + 1
        self._indicators = {
            (n.var, n.value): v for v, n in sorted(self.nodes.items()) if n.kind == INDICATOR
        }

    def new(self, kind, children=(), weights=None, **kw):
        nid = self._next
        self._next += 1
        self.nodes[nid] = SpnNode(nid, kind, **kw)
        self.children[nid] = list(children)
        if kind == SUM:
            self.weights[nid] = list(weights)
        return nid

    def indicator(self, var, value):
        key = (var, value)
        if key not in self._indicators:
            self._indicators[key] = self.new(INDICATOR, var=var, value=value)
        return self._indicators[key]

    def reachable(self, start=None):
        return _graph.reachable(self.children, self.root if start is None else start)

    def scopes(self, within) -> Dict[int, FrozenSet[str]]:
        out: Dict[int, FrozenSet[str]] = {}
        for v in _graph.bottom_up_order(self.children, within):
            n = self.nodes[v]
            if n.kind in (INDICATOR, DIST):
                out[v] = frozenset((n.var,))
            else:
                out[v] = frozenset().union(*(out[c] for c in self.children[v]))
        return out

    def replace_child(self, parent, old, new):
        kids = self.children[parent]
        i = kids.index(old)
        if new in kids:
            if self.nodes[parent].kind != SUM:
                raise StructureError(f"rewrite would duplicate child {new} under product {parent}", "E109")
            ws = self.weights[parent]
            ws[kids.index(new)] += ws[i]
            del kids[i]
            del ws[i]
        else:
            kids[i] = new

    def prune(self):
        keep = self.reachable()
        for v in list(self.nodes):
            if v not in keep:
                del self.nodes[v]
                del self.children[v]
                self.weights.pop(v, None)
        self._indicators = {k: v for k, v in self._indicators.items() if v in keep}

    def graph(self) -> SpnGraph:
        self.prune()
        return SpnGraph(
            [self.nodes[v] for v in sorted(self.nodes)],
            self.children,
            {v: ws for v, ws in self.weights.items() if v in self.nodes},
            self.root,
            self.variables,
            name=self.name,
        )


# -- decomposition ------------------------------------------------------------


def _require(spn, *props, code="E401"):
    report = validate(spn)
    for prop in props:
        if not getattr(report, prop):
            witness = next((o for o in report.offending_nodes if o[1] == prop), None)
            node = witness[0] if witness else None
            detail = f" at node {node}: {witness[2]}" if witness else ""
            raise PreconditionError(f"SPN is not {prop}{detail}", code, node=node)
    return report


def decompose(spn: SpnGraph):
    """Equivalent complete and decomposable SPN plus a one-pass trace.

    Product nodes are visited children-first.  At a non-decomposable
    product ``m`` with shared variables ``Ω`` (the union of pairwise scope
    intersections of its children):

    * every node below ``m`` whose scope meets ``Ω`` but is not contained in
      it has the children lying entirely inside ``Ω`` disconnected;
    * such a node that is also used from outside the sub-network of ``m``
      is replaced for those outside parents by ``node × Π I[x*]`` so their
      polynomials do not change;
    * ``Π_{X∈Ω} I[x*]`` is linked under ``m`` directly.

    A detached component over ``Ω`` contributes ``c · Π I[x*]`` where ``c``
    is its value with all indicators set to one.  When ``c != 1`` the
    constant is carried along: folded into the sum weights above, or put on
    a one-edge sum node wrapping the re-attached indicators.  The network
    polynomial is therefore preserved exactly at every complete assignment.
    """
    report = _require(spn, "complete", "consistent")
    trace = TransformTrace()
    if report.decomposable:
        trace.add("decompose", spn, spn)
        return spn, trace

    w = _Work(spn)
    for m in spn.bottom_up:
        if w.nodes[m].kind != PRODUCT or m not in w.reachable():
            continue
        below = w.reachable(m)
        scopes = w.scopes(below)
        kids = w.children[m]
        omega: Set[str] = set()
        for i, a in enumerate(kids):
            for b in kids[i + 1:]:
                omega |= scopes[a] & scopes[b]
        if omega:
            _pull_up_shared(w, m, frozenset(omega), below, scopes)

    _cleanup(w)
    out = w.graph()
    trace.add("decompose", spn, out)
    return out, trace


def _pull_up_shared(w: _Work, m, omega, below, scopes):
    star = _shared_literals(w, m, omega, below)
    touched = {v for v in below if scopes[v] & omega}
    inside = {v for v in touched if scopes[v] <= omega and v != m}

    # value with every indicator at one, for components that get detached
    ones: Dict[int, float] = {}
    for v in _graph.bottom_up_order(w.children, inside):
        n = w.nodes[v]
        if n.kind == INDICATOR:
            ones[v] = 1.0
        elif n.kind == DIST:
            ones[v] = sum(n.probs)
        elif n.kind == SUM:
            ones[v] = sum(wt * ones[c] for c, wt in zip(w.children[v], w.weights[v]))
        else:
            acc = 1.0
            for c in w.children[v]:
                acc *= ones[c]
            ones[v] = acc

    live = w.reachable()
    parents = {v: [] for v in live}
    for v in sorted(live):
        for c in w.children[v]:
            parents[c].append(v)

    kappa: Dict[int, float] = {}
    for v in _graph.bottom_up_order(w.children, touched - inside):
        n = w.nodes[v]
        if n.kind == PRODUCT:
            k, kept = 1.0, []
            for c in w.children[v]:
                if c in inside:
                    k *= ones[c]
                else:
                    kept.append(c)
                    k *= kappa.get(c, 1.0)
            w.children[v] = kept
            kappa[v] = k
        else:
            w.weights[v] = [wt * kappa[c] for c, wt in zip(w.children[v], w.weights[v])]
            kappa[v] = 1.0

    for v in sorted(touched - inside - {m}):
        outside = [p for p in parents.get(v, ()) if p not in below]
        if not outside:
            continue
        factor = _indicator_factor(w, sorted(scopes[v] & omega), star, kappa[v])
        p = w.new(PRODUCT, [v, factor])
        for f in dict.fromkeys(outside):
            w.replace_child(f, v, p)

    w.children[m].append(_indicator_factor(w, sorted(omega), star, kappa[m]))


def _shared_literals(w: _Work, m, omega, below):
    values: Dict[str, Set[int]] = {x: set() for x in omega}
    for v in below:
        n = w.nodes[v]
        if n.var in values:
            if n.kind == INDICATOR:
                values[n.var].add(n.value)
            elif n.kind == DIST:
                values[n.var].update(i for i, p in enumerate(n.probs) if p > 0)
    star = {}
    for x, vals in values.items():
        if len(vals) != 1:
            raise PreconditionError(
                f"product node {m} is not consistent: {x} takes values {sorted(vals)}", "E401", node=m
            )
        star[x] = next(iter(vals))
    return star


def _indicator_factor(w: _Work, variables, star, constant):
    inds = [w.indicator(x, star[x]) for x in variables]
    core = inds[0] if len(inds) == 1 else w.new(PRODUCT, inds)
    if constant == 1.0:
        return core
    return w.new(SUM, [core], [constant])


def _cleanup(w: _Work):
    w.prune()
    parents = _graph.parents_of(w.children)
    empty = [v for v, n in w.nodes.items() if n.kind == PRODUCT and not w.children[v]]
    for v in empty:
        for p in parents.get(v, ()):
            if w.nodes[p].kind != PRODUCT:
                raise StructureError(f"empty product {v} under sum node {p}", "E108")
            w.children[p].remove(v)
    w.prune()
    _contract_single_child(w, PRODUCT)


def _contract_single_child(w: _Work, kind):
    changed = True
    while changed:
        changed = False
        parents = _graph.parents_of(w.children)
        for v in _graph.bottom_up_order(w.children):
            if w.nodes[v].kind != kind or len(w.children[v]) != 1:
                continue
            (child,) = w.children[v]
            for p in dict.fromkeys(parents.get(v, ())):
                w.replace_child(p, v, child)
            if w.root == v:
                w.root = child
            w.children[v] = []
            w.prune()
            changed = True
            break


# -- weights and terminals ----------------------------------------------------


def normalize_weights(spn: SpnGraph) -> SpnGraph:
    """Locally normalized copy with the same distribution and structure."""
    _require(spn, "complete", "decomposable", code="E402")
    val: Dict[int, float] = {}
    new_weights: Dict[int, List[float]] = {}
    for v in spn.bottom_up:
        n = spn.nodes[v]
        kids = spn.children[v]
        if n.kind == INDICATOR:
            val[v] = 1.0
        elif n.kind == DIST:
            val[v] = sum(n.probs)
        elif n.kind == SUM:
            total = sum(wt * val[c] for c, wt in zip(kids, spn.weights[v]))
            if not total > 0:
                raise DegenerateError(f"sum node {v} carries zero mass", "E501", node=v)
            ws = [wt * val[c] / total for c, wt in zip(kids, spn.weights[v])]
            s = sum(ws)
            if abs(s - 1.0) > RENORMALIZE_DRIFT:
                ws = [x / s for x in ws]
            new_weights[v] = ws
            val[v] = total
        else:
            acc = 1.0
            for c in kids:
                acc *= val[c]
            val[v] = acc
    return SpnGraph(
        spn.nodes.values(), spn.children, new_weights, spn.root, spn.variables, name=spn.name
    )


def contract_unary_sums(spn: SpnGraph) -> SpnGraph:
    """Splice out sum nodes with a single child (weight must already be 1)."""
    unary = [v for v, n in spn.nodes.items() if n.kind == SUM and len(spn.children[v]) == 1]
    if not unary:
        return spn
    for v in unary:
        if abs(spn.weights[v][0] - 1.0) > 1e-9:
            raise PreconditionError(f"unary sum node {v} has weight {spn.weights[v][0]}, expected 1", "E402", node=v)
    w = _Work(spn)
    _contract_single_child(w, SUM)
    return w.graph()


def reduce_terminal_sums(spn: SpnGraph) -> SpnGraph:
    """Turn every sum node over a single variable into a distribution leaf."""
    _require(spn, "complete", "decomposable", code="E402")
    scopes = spn.scopes
    targets = [v for v in spn.bottom_up if spn.nodes[v].kind == SUM and len(scopes[v]) == 1]
    if not targets:
        return spn
    w = _Work(spn)
    for v in targets:
        (var,) = scopes[v]
        d = spn.var_map[var].domain_size
        coeffs = [_univariate_value(w, v, var, i) for i in range(d)]
        total = sum(coeffs)
        if abs(total - 1.0) > 1e-9:
            raise PreconditionError(
                f"sum node {v} is not weight-normalized (mass {total!r})", "E402", node=v
            )
        w.nodes[v] = SpnNode(v, DIST, var=var, probs=tuple(c / total for c in coeffs))
        w.children[v] = []
        w.weights.pop(v, None)
    return w.graph()


def _univariate_value(w: _Work, start, var, value):
    val: Dict[int, float] = {}
    for v in _graph.bottom_up_order(w.children, w.reachable(start)):
        n = w.nodes[v]
        if n.kind == INDICATOR:
            val[v] = 1.0 if n.value == value else 0.0
        elif n.kind == DIST:
            val[v] = n.probs[value]
        elif n.kind == SUM:
            val[v] = sum(wt * val[c] for c, wt in zip(w.children[v], w.weights[v]))
        else:
            acc = 1.0
            for c in w.children[v]:
                acc *= val[c]
            val[v] = acc
    return val[start]


def _point_mass_root(spn: SpnGraph) -> SpnGraph:
    n = spn.nodes[spn.root]
    if n.kind != INDICATOR:
        return spn
    d = spn.var_map[n.var].domain_size
    probs = tuple(1.0 if i == n.value else 0.0 for i in range(d))
    leaf = SpnNode(n.id, DIST, var=n.var, probs=probs)
    return SpnGraph([leaf], {n.id: ()}, {}, n.id, spn.variables, name=spn.name)


def to_normal(spn: SpnGraph):
    """Normal SPN with the same distribution, and the per-pass trace."""
    decomposed, trace = decompose(spn)
    stage = decomposed
    for name, fn in (
        ("normalize_weights", normalize_weights),
        ("contract_unary_sums", contract_unary_sums),
        ("reduce_terminal_sums", reduce_terminal_sums),
        ("point_mass_root", _point_mass_root),
    ):
        nxt = fn(stage)
        trace.add(name, stage, nxt)
        stage = nxt
    return stage, trace
