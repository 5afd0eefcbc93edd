"""Bipartite Bayesian networks with decision-diagram CPDs built from normal SPNs."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from .add import Add, OpCounter, TerminalDistLeaf, VarNode, add_evaluate, stump
from .errors import EnumerationLimitError, InputError, PreconditionError
from .spn_core import (
    DIST,
    INDICATOR,
    PRODUCT,
    SUM,
    JointTable,
    SpnGraph,
    Variable,
    height,
    spn_size,
    validate,
)

CYLINDER_CAP = 200_000
HIDDEN_ENUM_CAP = 1 << 16
CSI_PATH_CAP = 10_000


def hidden_name(node_id: int) -> str:
    return f"H_{node_id}"


@dataclass(frozen=True)
class HiddenVar:
    name: str
    domain_size: int
    source: int


@dataclass(frozen=True)
class BayesNet:
    hidden_vars: Tuple[HiddenVar, ...]
    observable_vars: Tuple[Variable, ...]
    edges: Tuple[Tuple[str, str], ...]
    cpds: Mapping[str, Add]
    hidden_order: Tuple[str, ...]
    op_count: int = 0
    name: str = "bn"
    _parents: Dict[str, Tuple[str, ...]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cpds", MappingProxyType(dict(self.cpds)))
        pa: Dict[str, List[str]] = {x.name: [] for x in self.observable_vars}
        for h, x in self.edges:
            pa[x].append(h)
        object.__setattr__(self, "_parents", {x: tuple(hs) for x, hs in pa.items()})

    def parents(self, x: str) -> Tuple[str, ...]:
        return self._parents[x]

    @property
    def hidden(self) -> Dict[str, HiddenVar]:
        return {h.name: h for h in self.hidden_vars}

    def stump_weights(self, h: str) -> Tuple[float, ...]:
        return tuple(c.value for c in self.cpds[h].root.children)


def _require_normal(spn: SpnGraph):
    report = validate(spn)
    if not report.normal:
        bad = report.offending_nodes[0] if report.offending_nodes else None
        where = f" (node {bad[0]}: {bad[1]})" if bad else ""
        raise PreconditionError(
            f"SPN is not normal{where}; run to_normal first", "E403", node=bad[0] if bad else None
        )


def _leaf_probs(spn: SpnGraph, node) -> Tuple[float, ...]:
    if node.kind == DIST:
        return node.probs
    d = spn.var_map[node.var].domain_size
    return tuple(1.0 if i == node.value else 0.0 for i in range(d))


def _observable_cpd(spn: SpnGraph, x: str, cache: Dict, counter: Optional[OpCounter] = None) -> Add:
    scopes = spn.scopes
    for v in spn.bottom_up:
        if x not in scopes[v] or (v, x) in cache:
            continue
        n = spn.nodes[v]
        if counter is not None:
            counter.calls += 1 + len(spn.children[v])
        if n.kind in (DIST, INDICATOR):
            cache[v, x] = TerminalDistLeaf(x, _leaf_probs(spn, n), source=v)
        elif n.kind == SUM:
            cache[v, x] = VarNode(hidden_name(v), [cache[c, x] for c in spn.children[v]], source=v)
        else:
            (child,) = [c for c in spn.children[v] if x in scopes[c]]
            cache[v, x] = cache[child, x]
    # every CPD carries the full top-down order of sum nodes as its reference
    order = tuple(hidden_name(v) for v in spn.top_down if spn.nodes[v].kind == SUM)
    return Add(cache[spn.root, x], order)


def build_cpd_observable(spn: SpnGraph, x, cache: Optional[Dict] = None) -> Add:
    """Decision diagram for ``Pr(X | parents)`` read off the sub-SPN over X."""
    name = x.name if isinstance(x, Variable) else x
    if name not in spn.scopes[spn.root]:
        raise PreconditionError(f"variable {name} is not in the scope of the SPN", "E404")
    return _observable_cpd(spn, name, {} if cache is None else cache)


def build_cpd_hidden(spn: SpnGraph, h) -> Add:
    """Decision stump carrying the (normalized) weights of the sum node behind ``h``."""
    node_id = h if isinstance(h, int) else _source_of(h)
    if node_id not in spn.nodes or spn.nodes[node_id].kind != SUM:
        raise PreconditionError(f"unknown hidden variable {h!r}", "E405")
    ws = spn.weights[node_id]
    total = sum(ws)
    if not total > 0:
        raise PreconditionError(f"sum node {node_id} has no positive weight", "E405", node=node_id)
    return stump(hidden_name(node_id), [w / total for w in ws], source=node_id)


def _source_of(h: str) -> int:
    if isinstance(h, HiddenVar):
        return h.source
    try:
        return int(str(h).removeprefix("H_"))
    except ValueError:
        raise PreconditionError(f"unknown hidden variable {h!r}", "E405") from None


def to_bn(spn: SpnGraph) -> BayesNet:
    """Bipartite BN (hidden layer of sum nodes, observable layer) with ADD CPDs."""
    _require_normal(spn)
    counter = OpCounter()
    scopes = spn.scopes
    sums = [v for v in spn.top_down if spn.nodes[v].kind == SUM]
    hidden = tuple(HiddenVar(hidden_name(v), len(spn.children[v]), v) for v in sums)
    obs = tuple(spn.variables)
    edges = []
    for v in spn.bottom_up:
        counter.calls += 2 * len(spn.children[v])
    for v in sums:
        members = scopes[v]
        for x in obs:
            if x.name in members:
                edges.append((hidden_name(v), x.name))
                counter.calls += 1
    cpds: Dict[str, Add] = {}
    cache: Dict = {}
    for x in obs:
        cpds[x.name] = _observable_cpd(spn, x.name, cache, counter)
    for v in sums:
        cpds[hidden_name(v)] = build_cpd_hidden(spn, v)
        counter.calls += 1 + len(spn.children[v])
    return BayesNet(hidden, obs, tuple(edges), cpds, tuple(h.name for h in hidden), counter.calls, name=spn.name)


# -- joint evaluation -----------------------------------------------------------


def bn_joint(bn: BayesNet, h: Mapping[str, int], x: Mapping[str, int]) -> float:
    """Product of all CPD entries at a complete assignment (h, x)."""
    missing = [v.name for v in bn.hidden_vars if v.name not in h]
    missing += [v.name for v in bn.observable_vars if v.name not in x]
    if missing:
        raise InputError(f"assignment is incomplete; missing {', '.join(missing)}", "E303")
    out = 1.0
    for v in bn.hidden_vars:
        out *= add_evaluate(bn.cpds[v.name], h)
    for v in bn.observable_vars:
        out *= add_evaluate(bn.cpds[v.name], h, x)
    return out


def _cylinders(bn: BayesNet, fixed: Mapping[str, int] = None, cap: int = CYLINDER_CAP):
    """Partition the hidden space into cells on which every CPD is constant.

    Branches only on hidden variables that some observable CPD reads under
    the current partial assignment.  Yields ``(weight, leaves)`` where
    ``weight`` is the probability mass of the cell (variables in ``fixed``
    excluded) and ``leaves`` maps each observable to the leaf it reaches.
    """
    fixed = dict(fixed or {})
    rank = {h: i for i, h in enumerate(bn.hidden_order)}
    weights = {h.name: bn.stump_weights(h.name) for h in bn.hidden_vars}
    mass = {h: sum(ws) for h, ws in weights.items()}
    roots = [bn.cpds[x.name].root for x in bn.observable_vars]
    count = 0

    def descend(n, h):
        while isinstance(n, VarNode) and n.var in h:
            n = n.children[h[n.var]]
        return n

    def rec(h, w):
        nonlocal count
        fronts = [descend(r, h) for r in roots]
        pending = {n.var for n in fronts if isinstance(n, VarNode)}
        if not pending:
            count += 1
            if count > cap:
                raise EnumerationLimitError(f"more than {cap} hidden-state cells", "E602")
            rest = 1.0
            for name, m in mass.items():
                if name not in h:
                    rest *= m
            yield w * rest, fronts
            return
        var = min(pending, key=rank.__getitem__)
        for k, p in enumerate(weights[var]):
            if p == 0.0:
                continue
            h[var] = k
            yield from rec(h, w * p)
            del h[var]

    yield from rec(dict(fixed), 1.0)


def bn_joint_table(bn: BayesNet, fixed: Mapping[str, int] = None, cap: int = CYLINDER_CAP) -> JointTable:
    """``Pr_B(x)`` for every x (conditioned on ``fixed`` hidden values if given)."""
    shape = tuple(v.domain_size for v in bn.observable_vars)
    table = np.zeros(shape)
    for w, leaves in _cylinders(bn, fixed, cap):
        block = np.array(w)
        for leaf in leaves:
            block = np.multiply.outer(block, np.asarray(leaf.probs))
        table += block
    return JointTable(tuple(bn.observable_vars), table.reshape(-1))


def bn_marginal(bn: BayesNet, x: Mapping[str, int], cap: int = CYLINDER_CAP) -> float:
    """``Σ_h Pr_B(h, x)`` for a complete observable assignment."""
    missing = [v.name for v in bn.observable_vars if v.name not in x]
    if missing:
        raise InputError(f"assignment is incomplete; missing {', '.join(missing)}", "E303")
    total = 0.0
    for w, leaves in _cylinders(bn, None, cap):
        for leaf in leaves:
            w *= leaf.probs[x[leaf.var]]
        total += w
    return total


def bn_marginal_naive(bn: BayesNet, x: Mapping[str, int], cap: int = HIDDEN_ENUM_CAP) -> float:
    """Literal sum of :func:`bn_joint` over every hidden assignment."""
    doms = [range(h.domain_size) for h in bn.hidden_vars]
    states = 1
    for d in doms:
        states *= len(d)
    if states > cap:
        raise EnumerationLimitError(f"hidden state space {states} exceeds cap {cap}", "E602")
    names = [h.name for h in bn.hidden_vars]
    return sum(bn_joint(bn, dict(zip(names, combo)), x) for combo in itertools.product(*doms))


# -- diagnostics ----------------------------------------------------------------


class CsiReport(NamedTuple):
    max_deviation: float
    products_checked: int
    paths_checked: int
    sampled: bool


def _paths_to(spn: SpnGraph, target: int, cap: int, rng: random.Random):
    """Sum-branch selections along root-to-``target`` paths; sampled past ``cap``."""
    parents = spn.parents
    counts: Dict[int, int] = {}
    for v in spn.top_down:
        counts[v] = 1 if v == spn.root else sum(counts[p] for p in parents[v])

    def step(p, v):
        return (p, spn.children[p].index(v)) if spn.nodes[p].kind == SUM else None

    if counts[target] <= cap:
        out = []

        def walk(v, acc):
            if v == spn.root:
                out.append(dict(acc))
                return
            for p in parents[v]:
                s = step(p, v)
                if s:
                    acc.append(s)
                walk(p, acc)
                if s:
                    acc.pop()

        walk(target, [])
        return out, False
    out = []
    for _ in range(cap):
        v, acc = target, []
        while v != spn.root:
            ps = parents[v]
            p = rng.choices(ps, weights=[counts[q] for q in ps])[0]
            s = step(p, v)
            if s:
                acc.append(s)
            v = p
        out.append(dict(acc))
    return out, True


def check_csi(bn: BayesNet, spn: SpnGraph, path_cap: int = CSI_PATH_CAP, seed: int = 0) -> CsiReport:
    """Check that scope(p) factorizes over p's children given any path to p."""
    rng = random.Random(seed)
    scopes = spn.scopes
    names = [v.name for v in bn.observable_vars]
    worst, n_paths, sampled, n_prod = 0.0, 0, False, 0
    for p in sorted(v for v, n in spn.nodes.items() if n.kind == PRODUCT):
        n_prod += 1
        paths, was_sampled = _paths_to(spn, p, path_cap, rng)
        sampled |= was_sampled
        seen = set()
        for path in paths:
            fixed = {hidden_name(s): k for s, k in path.items()}
            key = tuple(sorted(fixed.items()))
            if key in seen:
                continue
            seen.add(key)
            n_paths += 1
            table = bn_joint_table(bn, fixed)
            joint = table.marginal([x for x in names if x in scopes[p]])
            factored = np.ones(())
            for c in spn.children[p]:
                factored = np.multiply.outer(
                    factored, table.marginal([x for x in names if x in scopes[c]]).as_array()
                )
            child_order = [x for c in spn.children[p] for x in names if x in scopes[c]]
            factored_table = JointTable(
                tuple(spn.var_map[x] for x in child_order), factored.reshape(-1)
            ).reorder(joint.names)
            worst = max(worst, joint.max_deviation(factored_table))
    return CsiReport(worst, n_prod, n_paths, sampled)


class TreewidthReport(NamedTuple):
    max_in_degree: int
    bound: int
    floor_half_height: int


def treewidth_lower_bound(bn: BayesNet, spn: SpnGraph) -> TreewidthReport:
    deg = max((len(bn.parents(x.name)) for x in bn.observable_vars), default=0)
    return TreewidthReport(deg, deg, height(spn) // 2)


class BnSizeReport(NamedTuple):
    graph_size: int
    total_add_size: int
    bound_rhs: int

    @property
    def total(self):
        return self.graph_size + self.total_add_size

    @property
    def holds(self):
        return self.total <= self.bound_rhs


def bn_size(bn: BayesNet, spn: SpnGraph) -> BnSizeReport:
    n, s = len(bn.observable_vars), spn_size(spn)
    graph = len(bn.hidden_vars) + len(bn.observable_vars) + len(bn.edges)
    adds = sum(a.size for a in bn.cpds.values())
    return BnSizeReport(graph, adds, n * s + s + 2 * n * s)
