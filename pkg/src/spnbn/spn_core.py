"""Sum-product network graphs, structural checks and exact evaluation.

Value indices are 0-based.  For Boolean variables value 0 is the positive
literal ``x`` and value 1 is the negated literal ``x̄``, which makes the
enumeration order of a two-variable table ``(x1 x2, x1 x̄2, x̄1 x2, x̄1 x̄2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _graph
from .errors import DegenerateError, EnumerationLimitError, InputError, StructureError

SUM = "sum"
PRODUCT = "prod"
INDICATOR = "ind"
DIST = "dist"

MAX_ENUM_VARS = 16
TOLERANCE = 1e-9

Assignment = Mapping[str, int]
Scope = Dict[int, FrozenSet[str]]


@dataclass(frozen=True)
class Variable:
    name: str
    domain_size: int = 2

    def __post_init__(self):
        if self.domain_size < 2:
            raise StructureError(
                f"variable {self.name!r} needs domain_size >= 2, got {self.domain_size}", "E112"
            )


@dataclass(frozen=True)
class SpnNode:
    id: int
    kind: str
    var: Optional[str] = None
    value: Optional[int] = None
    probs: Optional[Tuple[float, ...]] = None

    @property
    def is_leaf(self):
        return self.kind in (INDICATOR, DIST)


def indicator(node_id, var, value):
    return SpnNode(node_id, INDICATOR, var=var, value=value)


def terminal_dist(node_id, var, probs):
    return SpnNode(node_id, DIST, var=var, probs=tuple(float(p) for p in probs))


class SpnGraph:
    """Rooted DAG of sum, product, indicator and distribution nodes.

    Construction checks every structural invariant; afterwards the graph is
    treated as immutable and all derived data (scopes, orderings, the
    flattened evaluation program) is cached on the instance.

    ``children[v]`` keeps declaration order and ``weights[v]`` is aligned
    with ``children[v]`` for sum nodes.
    """

    def __init__(
        self,
        nodes: Iterable[SpnNode],
        children: Mapping[int, Sequence[int]],
        weights: Mapping[int, Sequence[float]],
        root: int,
        variables: Sequence[Variable],
        name: str = "spn",
    ):
        node_map: Dict[int, SpnNode] = {}
        for n in nodes:
            if n.id in node_map:
                raise StructureError(f"duplicate node id {n.id}", "E102")
            node_map[n.id] = n
        var_map: Dict[str, Variable] = {}
        for v in variables:
            if v.name in var_map:
                raise StructureError(f"duplicate variable {v.name!r}", "E111")
            var_map[v.name] = v

        kids = {v: tuple(children.get(v, ())) for v in node_map}
        for v in children:
            if v not in node_map:
                raise StructureError(f"edge from unknown node {v}", "E101")
        wts = {}
        for v, ws in weights.items():
            if v not in node_map:
                raise StructureError(f"weights for unknown node {v}", "E101")
            wts[v] = tuple(float(w) for w in ws)

        if root not in node_map:
            raise StructureError(f"root {root} is not a declared node", "E103")

        for v, n in node_map.items():
            cs = kids[v]
            for c in cs:
                if c not in node_map:
                    raise StructureError(f"node {v} references unknown child {c}", "E101")
            if len(set(cs)) != len(cs):
                dup = next(c for c in cs if cs.count(c) > 1)
                raise StructureError(f"parallel edges {v} -> {dup}", "E109")
            if n.kind in (SUM, PRODUCT):
                if not cs:
                    raise StructureError(f"{n.kind} node {v} has no children", "E108")
            elif n.kind in (INDICATOR, DIST):
                if cs:
                    raise StructureError(f"leaf node {v} has children", "E115")
                if n.var not in var_map:
                    raise StructureError(f"node {v} uses undeclared variable {n.var!r}", "E110")
                d = var_map[n.var].domain_size
                if n.kind == INDICATOR and not (0 <= n.value < d):
                    raise StructureError(
                        f"indicator {v}: value {n.value} outside domain of {n.var} (size {d})", "E112"
                    )
                if n.kind == DIST:
                    _check_probs(v, n.var, n.probs, d)
            else:
                raise StructureError(f"node {v} has unknown kind {n.kind!r}", "E201")
            if n.kind == SUM:
                ws = wts.get(v)
                if ws is None or len(ws) != len(cs):
                    raise StructureError(f"sum node {v} needs one weight per edge", "E105")
                for w in ws:
                    if not math.isfinite(w) or w < 0:
                        raise StructureError(f"sum node {v} has invalid weight {w}", "E114")
            elif v in wts and wts[v]:
                raise StructureError(f"weights given on edges of non-sum node {v}", "E104")

        back = _graph.find_cycle(kids, root)
        if back is not None:
            raise StructureError(f"cycle through edge {back[0]} -> {back[1]}", "E106")
        seen = _graph.reachable(kids, root)
        if len(seen) != len(node_map):
            lost = min(set(node_map) - seen)
            raise StructureError(f"node {lost} is unreachable from root {root}", "E107")

        self.name = name
        self.variables: Tuple[Variable, ...] = tuple(variables)
        self.nodes = MappingProxyType(node_map)
        self.children = MappingProxyType(kids)
        self.weights = MappingProxyType({v: wts[v] for v in node_map if node_map[v].kind == SUM})
        self.root = root

        root_scope = self.scopes[root]
        unused = [v.name for v in self.variables if v.name not in root_scope]
        if unused:
            raise StructureError(f"declared variable {unused[0]!r} does not occur in the network", "E113")

    # -- basic views -------------------------------------------------------

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return [(v, c) for v in sorted(self.nodes) for c in self.children[v]]

    @property
    def sum_weights(self) -> Dict[Tuple[int, int], float]:
        return {(v, c): w for v, ws in self.weights.items() for c, w in zip(self.children[v], ws)}

    def variable(self, name) -> Variable:
        return self.var_map[name]

    @cached_property
    def var_map(self) -> Dict[str, Variable]:
        return {v.name: v for v in self.variables}

    @cached_property
    def parents(self) -> Dict[int, List[int]]:
        return _graph.parents_of(self.children)

    @cached_property
    def bottom_up(self) -> List[int]:
        return _graph.bottom_up_order(self.children)

    @cached_property
    def top_down(self) -> List[int]:
        return _graph.top_down_order(self.children, self.root)

    @cached_property
    def scopes(self) -> Scope:
        return compute_scopes(self)

    @cached_property
    def program(self):
        from .kernels import compile_circuit

        return compile_circuit(self)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"SpnGraph({self.name!r}, nodes={len(self.nodes)}, root={self.root})"

    def same_as(self, other: "SpnGraph") -> bool:
        """Exact structural equality (ids, kinds, edges, weights, variables)."""
        return (
            self.variables == other.variables
            and dict(self.nodes) == dict(other.nodes)
            and dict(self.children) == dict(other.children)
            and dict(self.weights) == dict(other.weights)
            and self.root == other.root
        )

    def subgraph(self, node_id: int) -> "SpnGraph":
        """The sub-SPN rooted at *node_id*, over the variables of its scope."""
        keep = _graph.reachable(self.children, node_id)
        scope = self.scopes[node_id]
        return SpnGraph(
            [self.nodes[v] for v in sorted(keep)],
            {v: self.children[v] for v in keep},
            {v: self.weights[v] for v in keep if v in self.weights},
            node_id,
            [v for v in self.variables if v.name in scope],
            name=f"{self.name}@{node_id}",
        )


def _check_probs(node_id, var, probs, d):
    if probs is None or len(probs) != d:
        raise StructureError(f"distribution {node_id} over {var} needs {d} probabilities", "E112")
    if any((not math.isfinite(p)) or p < 0 for p in probs):
        raise StructureError(f"distribution {node_id} has a negative or non-finite entry", "E112")
    if abs(sum(probs) - 1.0) > TOLERANCE:
        raise StructureError(f"distribution {node_id} sums to {sum(probs)!r}, not 1", "E112")


class SpnBuilder:
    """Incremental construction helper; ids are handed out sequentially."""

    def __init__(self, variables=(), name="spn"):
        self.name = name
        self.variables: List[Variable] = []
        self.nodes: Dict[int, SpnNode] = {}
        self.children: Dict[int, List[int]] = {}
        self.weights: Dict[int, List[float]] = {}
        self._next = 0
        self._indicators: Dict[Tuple[str, int], int] = {}
        for v in variables:
            self.var(*v) if isinstance(v, tuple) else self.var(v)

    def var(self, name, domain_size=2):
        if isinstance(name, Variable):
            self.variables.append(name)
        else:
            self.variables.append(Variable(name, domain_size))
        return self

    def _new(self, kind, **kw):
        nid = self._next
        self._next += 1
        self.nodes[nid] = SpnNode(nid, kind, **kw)
        self.children[nid] = []
        return nid

    def ind(self, var, value, shared=True):
        key = (var, value)
        if shared and key in self._indicators:
            return self._indicators[key]
        nid = self._new(INDICATOR, var=var, value=value)
        if shared:
            self._indicators[key] = nid
        return nid

    def dist(self, var, probs):
        return self._new(DIST, var=var, probs=tuple(float(p) for p in probs))

    def sum(self, children, weights):
        nid = self._new(SUM)
        self.children[nid] = list(children)
        self.weights[nid] = [float(w) for w in weights]
        return nid

    def prod(self, children):
        nid = self._new(PRODUCT)
        self.children[nid] = list(children)
        return nid

    def build(self, root) -> SpnGraph:
        keep = _graph.reachable(self.children, root)
        return SpnGraph(
            [self.nodes[v] for v in sorted(keep)],
            {v: self.children[v] for v in keep},
            {v: self.weights[v] for v in keep if v in self.weights},
            root,
            self.variables,
            name=self.name,
        )


# -- scopes and validation --------------------------------------------------


def compute_scopes(spn: SpnGraph) -> Scope:
    """Scope of every node, one bottom-up pass."""
    scopes: Scope = {}
    for v in spn.bottom_up:
        n = spn.nodes[v]
        if n.is_leaf:
            scopes[v] = frozenset((n.var,))
        else:
            scopes[v] = frozenset().union(*(scopes[c] for c in spn.children[v]))
    return scopes


def literal_sets(spn: SpnGraph) -> Dict[int, Dict[str, FrozenSet[int]]]:
    """For every node, the values each variable may take among its leaves.

    A distribution leaf contributes every value with positive probability.
    """
    lits: Dict[int, Dict[str, FrozenSet[int]]] = {}
    for v in spn.bottom_up:
        n = spn.nodes[v]
        if n.kind == INDICATOR:
            lits[v] = {n.var: frozenset((n.value,))}
        elif n.kind == DIST:
            lits[v] = {n.var: frozenset(i for i, p in enumerate(n.probs) if p > 0)}
        else:
            acc: Dict[str, FrozenSet[int]] = {}
            for c in spn.children[v]:
                for var, vals in lits[c].items():
                    acc[var] = acc.get(var, frozenset()) | vals
            lits[v] = acc
    return lits


@dataclass
class ValidationReport:
    complete: bool
    consistent: bool
    decomposable: bool
    normal: bool
    offending_nodes: List[Tuple[int, str, str]] = field(default_factory=list)

    @property
    def valid(self):
        return self.complete and self.consistent

    def flags(self):
        return {
            "complete": self.complete,
            "consistent": self.consistent,
            "decomposable": self.decomposable,
            "normal": self.normal,
        }


def validate(spn: SpnGraph, tolerance: float = TOLERANCE) -> ValidationReport:
    scopes = spn.scopes
    lits = literal_sets(spn)
    offenders: List[Tuple[int, str, str]] = []
    complete = consistent = decomposable = True
    weights_ok = terminals_ok = True

    for v in sorted(spn.nodes):
        n = spn.nodes[v]
        kids = spn.children[v]
        if n.kind == SUM:
            first = scopes[kids[0]]
            for c in kids[1:]:
                if scopes[c] != first:
                    complete = False
                    offenders.append((v, "complete", f"children {kids[0]} and {c} have different scopes"))
                    break
            total = sum(spn.weights[v])
            if abs(total - 1.0) > tolerance:
                weights_ok = False
                offenders.append((v, "normalized", f"weights sum to {total:.17g}"))
            if len(scopes[v]) == 1:
                terminals_ok = False
                offenders.append((v, "terminal", "sum node with a single-variable scope"))
        elif n.kind == PRODUCT:
            witness = _overlap_witness(kids, scopes)
            if witness is not None:
                decomposable = False
                a, b, var = witness
                offenders.append((v, "decomposable", f"children {a} and {b} share variable {var}"))
            clash = _consistency_witness(kids, scopes, lits)
            if clash is not None:
                consistent = False
                var, a, b = clash
                offenders.append((v, "consistent", f"variable {var} takes different values under children {a} and {b}"))

    normal = complete and decomposable and weights_ok and terminals_ok
    return ValidationReport(complete, consistent, decomposable, normal, offenders)


def _overlap_witness(kids, scopes):
    for i, a in enumerate(kids):
        for b in kids[i + 1:]:
            common = scopes[a] & scopes[b]
            if common:
                return a, b, min(common)
    return None


def _consistency_witness(kids, scopes, lits):
    for i, a in enumerate(kids):
        for b in kids[i + 1:]:
            for var in sorted(scopes[a] & scopes[b]):
                va, vb = lits[a][var], lits[b][var]
                if len(va | vb) > 1:
                    return var, a, b
    return None


# -- evaluation ---------------------------------------------------------------


def evaluate(spn: SpnGraph, indicators: Mapping[Tuple[str, int], float]) -> float:
    """Root value of the network for the given indicator inputs.

    Distribution leaves read the indicators of their variable, so a leaf
    ``p`` over ``X`` evaluates to ``sum_v p[v] * I[X=v]``.
    """
    val: Dict[int, float] = {}

    def lam(var, value):
        try:
            return float(indicators[(var, value)])
        except KeyError:
            raise InputError(f"no input given for indicator {var}={value}", "E301") from None

    for v in spn.bottom_up:
        n = spn.nodes[v]
        if n.kind == INDICATOR:
            val[v] = lam(n.var, n.value)
        elif n.kind == DIST:
            val[v] = sum(p * lam(n.var, i) for i, p in enumerate(n.probs))
        elif n.kind == SUM:
            val[v] = sum(w * val[c] for c, w in zip(spn.children[v], spn.weights[v]))
        else:
            acc = 1.0
            for c in spn.children[v]:
                acc *= val[c]
            val[v] = acc
    return val[spn.root]


def evidence_indicators(spn: SpnGraph, evidence: Assignment) -> Dict[Tuple[str, int], float]:
    """Indicator inputs for (possibly partial) evidence; unset variables get all ones."""
    for name, value in evidence.items():
        if name not in spn.var_map:
            raise InputError(f"unknown variable {name!r} in evidence", "E302")
        d = spn.var_map[name].domain_size
        if not (isinstance(value, (int, np.integer)) and 0 <= value < d):
            raise InputError(f"value {value!r} outside domain of {name} (size {d})", "E302")
    lam = {}
    for var in spn.variables:
        for i in range(var.domain_size):
            if var.name in evidence:
                lam[(var.name, i)] = 1.0 if evidence[var.name] == i else 0.0
            else:
                lam[(var.name, i)] = 1.0
    return lam


def query(spn: SpnGraph, evidence: Assignment) -> float:
    """Unnormalized f(evidence); empty evidence gives the partition function."""
    return evaluate(spn, evidence_indicators(spn, evidence))


def partition_function(spn: SpnGraph) -> float:
    return query(spn, {})


@dataclass
class JointTable:
    """Dense table over complete assignments, first variable most significant."""

    variables: Tuple[Variable, ...]
    values: np.ndarray

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        expected = int(np.prod([v.domain_size for v in self.variables], dtype=np.int64))
        if self.values.size != expected:
            raise ValueError(f"table has {self.values.size} entries, expected {expected}")

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @property
    def shape(self):
        return tuple(v.domain_size for v in self.variables)

    def as_array(self):
        return self.values.reshape(self.shape) if self.variables else self.values.reshape(())

    def __getitem__(self, assignment):
        if isinstance(assignment, Mapping):
            assignment = tuple(assignment[n] for n in self.names)
        return float(self.as_array()[tuple(assignment)])

    def total(self):
        return float(self.values.sum())

    def normalized(self) -> "JointTable":
        return JointTable(self.variables, self.values / self.values.sum())

    def reorder(self, names: Sequence[str]) -> "JointTable":
        lookup = {v.name: v for v in self.variables}
        if sorted(names) != sorted(lookup):
            raise ValueError(f"cannot reorder {self.names} as {tuple(names)}")
        axes = [self.names.index(n) for n in names]
        arr = np.transpose(self.as_array(), axes)
        return JointTable(tuple(lookup[n] for n in names), arr.reshape(-1))

    def marginal(self, names: Sequence[str]) -> "JointTable":
        keep = [n for n in self.names if n in set(names)]
        drop = tuple(i for i, n in enumerate(self.names) if n not in set(names))
        arr = self.as_array().sum(axis=drop) if drop else self.as_array()
        lookup = {v.name: v for v in self.variables}
        return JointTable(tuple(lookup[n] for n in keep), np.asarray(arr).reshape(-1)).reorder(
            [n for n in names]
        )

    def max_deviation(self, other: "JointTable") -> float:
        aligned = other.reorder(self.names)
        return float(np.max(np.abs(self.values - aligned.values))) if self.values.size else 0.0


def all_assignments(variables: Sequence[Variable]) -> np.ndarray:
    """Every complete assignment as a row, in table order."""
    dims = [v.domain_size for v in variables]
    if not dims:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices(dims).reshape(len(dims), -1).T
    return np.ascontiguousarray(grid, dtype=np.int64)


def _check_enum(spn, max_enum_vars):
    n = len(spn.variables)
    if n > max_enum_vars:
        raise EnumerationLimitError(
            f"{n} variables exceed the enumeration limit of {max_enum_vars}", "E601"
        )


def expand_polynomial(spn: SpnGraph, max_enum_vars: int = MAX_ENUM_VARS) -> JointTable:
    """Coefficient of every complete monomial of the network polynomial."""
    _check_enum(spn, max_enum_vars)
    from .kernels import eval_assignments

    rows = all_assignments(spn.variables)
    return JointTable(spn.variables, eval_assignments(spn.program, rows))


def distribution(spn: SpnGraph, max_enum_vars: int = MAX_ENUM_VARS) -> JointTable:
    table = expand_polynomial(spn, max_enum_vars)
    z = table.total()
    if not z > 0:
        raise DegenerateError("partition function is zero; no distribution is defined", "E502")
    return JointTable(table.variables, table.values / z)


class SizeMetrics(NamedTuple):
    node_count: int
    edge_count: int
    size: int
    height: int


def height(spn: SpnGraph) -> int:
    depth: Dict[int, int] = {}
    for v in spn.bottom_up:
        kids = spn.children[v]
        depth[v] = 1 + max(depth[c] for c in kids) if kids else 0
    return depth[spn.root]


def size_metrics(spn: SpnGraph) -> SizeMetrics:
    nodes = len(spn.nodes)
    edges = sum(len(cs) for cs in spn.children.values())
    return SizeMetrics(nodes, edges, nodes + edges, height(spn))


def spn_size(spn: SpnGraph) -> int:
    return size_metrics(spn).size
