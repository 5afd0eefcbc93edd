"""Variable elimination over ADD factors, recovering an SPN from a BN."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from .add import (
    Add,
    OpCounter,
    OpProduct,
    TerminalDistLeaf,
    TerminalReal,
    VarNode,
    multiply,
    sum_out,
)
from .bn import BayesNet, bn_size, to_bn
from .errors import PreconditionError, StructureError
from .normal_form import to_normal
from .spn_core import (
    DIST,
    INDICATOR,
    MAX_ENUM_VARS,
    PRODUCT,
    SUM,
    TOLERANCE,
    SpnGraph,
    SpnNode,
    Variable,
    distribution,
    spn_size,
    validate,
)


class EliminationStep(NamedTuple):
    variable: str
    factors: Tuple[Add, ...]
    multiplications: int


def elimination_order(bn: BayesNet) -> Tuple[str, ...]:
    """Children before parents: the reverse of the BN's hidden order."""
    return tuple(reversed(bn.hidden_order))


def initial_factors(bn: BayesNet) -> List[Add]:
    return [bn.cpds[x] for x in sorted(v.name for v in bn.observable_vars)]


def elimination_steps(bn: BayesNet, counter: Optional[OpCounter] = None) -> Iterator[EliminationStep]:
    """Run elimination lazily, yielding the factor set after each hidden variable."""
    counter = counter if counter is not None else OpCounter()
    factors = initial_factors(bn)
    for h in elimination_order(bn):
        hits = [i for i, f in enumerate(factors) if h in f.hidden_vars]
        if not hits:
            raise StructureError(f"hidden variable {h} appears in no factor", "E408")
        merged = factors[hits[0]]
        for i in hits[1:]:
            merged = multiply(merged, factors[i], counter)
        merged = sum_out(merged, h, bn.cpds[h], counter)
        drop = set(hits[1:])
        factors = [merged if i == hits[0] else f for i, f in enumerate(factors) if i not in drop]
        yield EliminationStep(h, tuple(factors), len(hits) - 1)


def eliminate(bn: BayesNet, counter: Optional[OpCounter] = None) -> Add:
    """Sum out every hidden variable; the result is a VarNode-free symbolic ADD."""
    counter = counter if counter is not None else OpCounter()
    factors = initial_factors(bn)
    for step in elimination_steps(bn, counter):
        factors = list(step.factors)
    result = factors[0]
    for f in factors[1:]:
        result = multiply(result, f, counter)
    return result


# -- materialization ------------------------------------------------------------


def symbolic_to_spn(a: Add, variables: Optional[Sequence[Variable]] = None, name: str = "recovered") -> SpnGraph:
    """Read a symbolic ADD without variable nodes back as an SpnGraph.

    Nodes keep their provenance id (the source SPN node) where that id is
    still unique; product nodes and duplicates receive fresh ids above the
    largest provenance id.
    """
    order = a.nodes()
    for n in order:
        if isinstance(n, VarNode):
            raise PreconditionError(f"hidden variable {n.var} was not eliminated", "E407")
        if isinstance(n, TerminalReal):
            raise PreconditionError("constant terminal has no SPN counterpart", "E409")
    if variables is None:
        doms: Dict[str, int] = {}
        for n in order:
            if isinstance(n, TerminalDistLeaf):
                doms.setdefault(n.var, len(n.probs))
        variables = [Variable(v, doms[v]) for v in sorted(doms)]

    used, ids = set(), {}
    sources = [getattr(n, "source", None) for n in order]
    nxt = max([s for s in sources if s is not None], default=-1) + 1
    for n, s in zip(order, sources):
        if s is not None and s not in used:
            ids[id(n)] = s
            used.add(s)
    for n in order:
        if id(n) not in ids:
            ids[id(n)] = nxt
            nxt += 1

    nodes, children, weights = [], {}, {}
    for n in order:
        nid = ids[id(n)]
        if isinstance(n, TerminalDistLeaf):
            nodes.append(SpnNode(nid, DIST, var=n.var, probs=n.probs))
            children[nid] = ()
        elif isinstance(n, OpProduct):
            nodes.append(SpnNode(nid, PRODUCT))
            children[nid] = tuple(ids[id(c)] for c in n.children)
        else:
            kids, ws = [], []
            for c, w in zip(n.children, n.weights):
                cid = ids[id(c)]
                if cid in kids:
                    ws[kids.index(cid)] += w
                else:
                    kids.append(cid)
                    ws.append(w)
            nodes.append(SpnNode(nid, SUM))
            children[nid] = tuple(kids)
            weights[nid] = tuple(ws)
    return SpnGraph(nodes, children, weights, ids[id(a.root)], variables, name=name)


# -- structural comparison ------------------------------------------------------


def canonical_hash(spn: SpnGraph, digits: int = 9) -> str:
    """Hash invariant under node renaming and product-chain flattening."""
    memo: Dict[int, str] = {}

    def flat_children(v):
        out = []
        for c in spn.children[v]:
            if spn.nodes[c].kind == PRODUCT:
                out.extend(flat_children(c))
            else:
                out.append(c)
        return out

    for v in spn.bottom_up:
        n = spn.nodes[v]
        if n.kind == INDICATOR:
            text = f"I:{n.var}={n.value}"
        elif n.kind == DIST:
            text = f"D:{n.var}:" + ",".join(f"{p:.{digits}f}" for p in n.probs)
        elif n.kind == SUM:
            parts = sorted(f"{w:.{digits}f}*{memo[c]}" for c, w in zip(spn.children[v], spn.weights[v]))
            text = "S(" + ";".join(parts) + ")"
        else:
            text = "P(" + ";".join(sorted(memo[c] for c in flat_children(v))) + ")"
        memo[v] = hashlib.sha1(text.encode()).hexdigest()
    return memo[spn.root]


def flattened_size(spn: SpnGraph) -> int:
    """Size after merging every product node into its product parents."""
    reach, stack = set(), [spn.root]
    edges = 0
    while stack:
        v = stack.pop()
        if v in reach:
            continue
        reach.add(v)
        kids = spn.children[v]
        if spn.nodes[v].kind == PRODUCT:
            kids = _flat(spn, v)
        edges += len(kids)
        stack.extend(kids)
    return len(reach) + edges


def _flat(spn, v):
    out = []
    for c in spn.children[v]:
        if spn.nodes[c].kind == PRODUCT:
            out.extend(_flat(spn, c))
        else:
            out.append(c)
    return out


def isomorphic(a: SpnGraph, b: SpnGraph) -> bool:
    """Same structure and parameters up to renaming and product-chain contraction."""
    return canonical_hash(a) == canonical_hash(b) and flattened_size(a) == flattened_size(b)


# -- round trip -----------------------------------------------------------------


class RoundTripSizes(NamedTuple):
    input: int
    normal: int
    bn: int
    recovered: int


@dataclass
class RoundTripReport:
    max_deviation: float
    sizes: RoundTripSizes
    op_counts: Dict[str, int]
    recovered_valid: bool
    isomorphic: bool
    bn_bound_holds: bool
    tolerance: float = TOLERANCE
    error: Optional[str] = None
    recovered: Optional[SpnGraph] = field(default=None, repr=False)

    @property
    def size_non_increasing(self):
        return self.sizes.recovered <= self.sizes.normal

    @property
    def passed(self) -> bool:
        return (
            self.error is None
            and self.max_deviation <= self.tolerance
            and self.recovered_valid
            and self.size_non_increasing
            and self.bn_bound_holds
        )

    def render(self) -> str:
        lines = [
            f"pass: {str(self.passed).lower()}",
            f"max_deviation: {self.max_deviation:.3e}",
            "sizes: " + " ".join(f"{k}={v}" for k, v in self.sizes._asdict().items()),
            "op_counts: " + " ".join(f"{k}={v}" for k, v in self.op_counts.items()),
            f"recovered_valid: {str(self.recovered_valid).lower()}",
            f"isomorphic_to_normal: {str(self.isomorphic).lower()}",
            f"bn_size_bound: {str(self.bn_bound_holds).lower()}",
        ]
        if self.error:
            lines.append(f"error: {self.error}")
        return "\n".join(lines)


def roundtrip(spn: SpnGraph, tolerance: float = TOLERANCE, max_enum_vars: int = MAX_ENUM_VARS) -> RoundTripReport:
    """SPN → normal SPN → BN → elimination → SPN, checked against the input."""
    normal, trace = to_normal(spn)
    bn = to_bn(normal)
    counter = OpCounter()
    final = eliminate(bn, counter)
    recovered = symbolic_to_spn(final, spn.variables, name=spn.name)
    reference = distribution(spn, max_enum_vars)
    dev = max(
        reference.max_deviation(distribution(recovered, max_enum_vars)),
        reference.max_deviation(distribution(normal, max_enum_vars)),
    )
    report = validate(recovered, tolerance)
    size = bn_size(bn, normal)
    return RoundTripReport(
        max_deviation=dev,
        sizes=RoundTripSizes(spn_size(spn), spn_size(normal), size.total, spn_size(recovered)),
        op_counts={
            "normalize": sum(p.nodes_added + p.edges_added + p.nodes_removed + p.edges_removed for p in trace.passes),
            "to_bn": bn.op_count,
            "multiplications": counter.products,
            "multiply_ops": counter.multiply,
            "sum_out_ops": counter.sum_out,
        },
        recovered_valid=report.complete and report.decomposable,
        isomorphic=isomorphic(recovered, normal),
        bn_bound_holds=size.holds,
        tolerance=tolerance,
        recovered=recovered,
    )
