"""Extended algebraic decision diagrams with symbolic sum/product nodes.

Nodes are immutable Python objects and diagrams share them freely, so
identity (``is``) is the sharing relation.  Internal variable nodes branch
on hidden variables; leaves are real constants or univariate distributions
over an observable variable.  ``OpProduct`` and ``OpSum`` appear once
diagrams are multiplied and hidden variables summed out.
"""
from __future__ import annotations

import graphlib
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import InputError, OrderViolationError, PreconditionError


class AddNode:
    __slots__ = ("_hvars",)

    @property
    def hidden_vars(self) -> frozenset:
        """Variables of the VarNodes reachable from this node (cached)."""
        try:
            return self._hvars
        except AttributeError:
            pass
        out = _hidden_vars(self)
        return out

    def kids(self) -> Tuple["AddNode", ...]:
        return ()


def _hidden_vars(root: AddNode) -> frozenset:
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if hasattr(node, "_hvars"):
            continue
        if not expanded:
            stack.append((node, True))
            stack.extend((c, False) for c in node.kids() if not hasattr(c, "_hvars"))
            continue
        acc = frozenset().union(*(c._hvars for c in node.kids()))
        if isinstance(node, VarNode):
            acc = acc | {node.var}
        node._hvars = acc
    return root._hvars


class VarNode(AddNode):
    __slots__ = ("var", "children", "source")

    def __init__(self, var: str, children: Sequence[AddNode], source: Optional[int] = None):
        self.var = var
        self.children = tuple(children)
        self.source = source

    def kids(self):
        return self.children

    def __repr__(self):
        return f"VarNode({self.var}, {len(self.children)} branches)"


class TerminalReal(AddNode):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def __repr__(self):
        return f"TerminalReal({self.value!r})"


class TerminalDistLeaf(AddNode):
    __slots__ = ("var", "probs", "source")

    def __init__(self, var: str, probs: Sequence[float], source: Optional[int] = None):
        self.var = var
        self.probs = tuple(float(p) for p in probs)
        self.source = source

    def __repr__(self):
        return f"TerminalDistLeaf({self.var}, {self.probs})"


class OpProduct(AddNode):
    __slots__ = ("children",)

    def __init__(self, children: Iterable[AddNode]):
        self.children = tuple(children)

    def kids(self):
        return self.children

    def __repr__(self):
        return f"OpProduct({len(self.children)})"


class OpSum(AddNode):
    __slots__ = ("children", "weights", "source")

    def __init__(self, children: Sequence[AddNode], weights: Sequence[float], source: Optional[int] = None):
        self.children = tuple(children)
        self.weights = tuple(float(w) for w in weights)
        self.source = source

    def kids(self):
        return self.children

    def __repr__(self):
        return f"OpSum({len(self.children)})"


LEAF_TYPES = (TerminalReal, TerminalDistLeaf)


class Add:
    """A rooted diagram plus the hidden-variable order its paths respect."""

    __slots__ = ("root", "variable_order")

    def __init__(self, root: AddNode, variable_order: Sequence[str] = ()):
        self.root = root
        self.variable_order = tuple(variable_order)

    def nodes(self) -> List[AddNode]:
        """Unique nodes, parents before children (DFS preorder)."""
        seen, out, stack = set(), [], [self.root]
        while stack:
            n = stack.pop()
            if id(n) in seen:
                continue
            seen.add(id(n))
            out.append(n)
            stack.extend(reversed(n.kids()))
        return out

    @property
    def node_count(self):
        return len(self.nodes())

    @property
    def edge_count(self):
        return sum(len(n.kids()) for n in self.nodes())

    @property
    def size(self):
        ns = self.nodes()
        return len(ns) + sum(len(n.kids()) for n in ns)

    @property
    def hidden_vars(self) -> frozenset:
        return self.root.hidden_vars

    @property
    def observables(self) -> frozenset:
        return frozenset(n.var for n in self.nodes() if isinstance(n, TerminalDistLeaf))

    def is_stump(self):
        r = self.root
        return isinstance(r, VarNode) and all(isinstance(c, TerminalReal) for c in r.children)

    def __repr__(self):
        return f"Add(root={self.root!r}, size={self.size})"


def stump(var: str, weights: Sequence[float], source: Optional[int] = None) -> Add:
    return Add(VarNode(var, [TerminalReal(w) for w in weights], source), (var,))


# -- evaluation -----------------------------------------------------------------


def add_evaluate(a: Union[Add, AddNode], h: Mapping[str, int], x: Mapping[str, int] = None) -> float:
    """Value of the diagram at hidden assignment ``h`` and observables ``x``."""
    x = x or {}
    root = a.root if isinstance(a, Add) else a
    memo: Dict[int, float] = {}

    def value(n: AddNode) -> float:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, VarNode):
            if n.var not in h:
                raise InputError(f"hidden variable {n.var} is unassigned", "E304")
            branch = h[n.var]
            if not 0 <= branch < len(n.children):
                raise InputError(f"value {branch} out of range for {n.var}", "E302")
            out = value(n.children[branch])
        elif isinstance(n, TerminalReal):
            out = n.value
        elif isinstance(n, TerminalDistLeaf):
            if n.var not in x:
                raise InputError(f"observable {n.var} is unassigned", "E304")
            out = n.probs[x[n.var]]
        elif isinstance(n, OpProduct):
            out = 1.0
            for c in n.children:
                out *= value(c)
        else:
            out = sum(w * value(c) for c, w in zip(n.children, n.weights))
        memo[key] = out
        return out

    return value(root)


# -- ordering -------------------------------------------------------------------


def merge_orders(*orders: Sequence[str]) -> Tuple[str, ...]:
    """A single order compatible with every input order.

    Orders that are restrictions of one reference order merge without
    introducing constraints: when one order covers the others it is
    returned as is.
    """
    orders = [tuple(o) for o in orders]
    for i, a in enumerate(orders):
        for b in orders[i + 1:]:
            sa, sb = set(a), set(b)
            if [v for v in a if v in sb] != [v for v in b if v in sa]:
                raise OrderViolationError(f"incompatible variable orders {a} and {b}", "E701")
    widest = max(orders, key=len, default=())
    if all(set(o) <= set(widest) for o in orders):
        return widest
    ts = graphlib.TopologicalSorter()
    for order in orders:
        for k, v in enumerate(order):
            ts.add(v, *order[:k][-1:])
    try:
        return tuple(ts.static_order())
    except graphlib.CycleError as exc:
        raise OrderViolationError(f"incompatible variable orders: cycle {exc.args[1]}", "E701") from None


def check_path_order(a: Add) -> bool:
    """True iff each path meets every variable at most once, in order."""
    rank = {v: i for i, v in enumerate(a.variable_order)}
    memo: Dict[int, bool] = {}

    def ok(n: AddNode, last: int) -> bool:
        # ranks strictly increase along a valid path, so repeats are caught too
        key = (id(n), last)
        if key in memo:
            return memo[key]
        if isinstance(n, VarNode):
            r = rank.get(n.var)
            if r is None or r <= last:
                memo[key] = False
                return False
            last = r
        res = all(ok(c, last) for c in n.kids())
        memo[key] = res
        return res

    return ok(a.root, -1)


# -- multiplication -------------------------------------------------------------


class OpCounter:
    """Counts elementary diagram operations."""

    __slots__ = ("multiply", "sum_out", "calls", "products")

    def __init__(self):
        self.products = 0
        self.multiply = 0
        self.sum_out = 0
        self.calls = 0

    @property
    def total(self):
        return self.multiply + self.sum_out

    def __repr__(self):
        return f"OpCounter(multiply={self.multiply}, sum_out={self.sum_out})"


def _product(children: Sequence[AddNode]) -> OpProduct:
    seen = frozenset()
    for c in children:
        hv = c.hidden_vars
        shared = seen & hv
        if shared:
            raise OrderViolationError(
                f"product would duplicate uneliminated hidden variable(s) {sorted(shared)}; "
                "eliminate in inverse topological order",
                "E701",
            )
        seen |= hv
    flat: List[AddNode] = []
    for c in children:
        if isinstance(c, OpProduct):
            flat.extend(c.children)
        else:
            flat.append(c)
    return OpProduct(flat)


def multiply(a1: Add, a2: Add, counter: Optional[OpCounter] = None) -> Add:
    """Symbolic product of two diagrams, sharing common sub-diagrams.

    Three cases drive the recursion: two variable nodes over the same
    variable recurse branch-wise; a variable node against a product node
    either multiplies into the product child rooted at the same variable or
    joins the product as a new child (two product nodes apply that rule to
    each child of the second); anything else becomes a fresh product node.
    Adjacent product nodes are flattened on construction.
    """
    order = merge_orders(a1.variable_order, a2.variable_order)
    cache: Dict[Tuple[int, int], AddNode] = {}
    keep = []
    counter = counter if counter is not None else OpCounter()
    counter.products += 1

    def mul(r1: AddNode, r2: AddNode) -> AddNode:
        key = (id(r1), id(r2))
        hit = cache.get(key)
        if hit is not None:
            return hit
        counter.multiply += 1
        if isinstance(r1, VarNode) and isinstance(r2, VarNode):
            if r1.var == r2.var:
                if len(r1.children) != len(r2.children):
                    raise PreconditionError(f"domain mismatch for {r1.var}", "E406")
                out = VarNode(r1.var, [mul(c1, c2) for c1, c2 in zip(r1.children, r2.children)], r1.source)
            else:
                out = _product([r1, r2])
        elif isinstance(r1, VarNode) and isinstance(r2, OpProduct):
            out = _absorb(r2, [r1])
        elif isinstance(r1, OpProduct) and isinstance(r2, VarNode):
            out = _absorb(r1, [r2])
        elif isinstance(r1, OpProduct) and isinstance(r2, OpProduct):
            out = _absorb(r1, r2.children)
        else:
            out = _product([r1, r2])
        keep.append((r1, r2))
        cache[key] = out
        return out

    def _absorb(prod: OpProduct, incoming: Sequence[AddNode]) -> AddNode:
        # each incoming variable node multiplies into the child over the same
        # variable, or joins the product as a new child
        kids = list(prod.children)
        slot = {c.var: i for i, c in enumerate(kids) if isinstance(c, VarNode)}
        for c in incoming:
            i = slot.get(c.var) if isinstance(c, VarNode) else None
            if i is None:
                kids.append(c)
            else:
                kids[i] = mul(kids[i], c)
        return _product(kids)

    return Add(mul(a1.root, a2.root), order)


def merge_product_chains(a: Add) -> Add:
    """Flatten product nodes whose parent is also a product node."""
    memo: Dict[int, AddNode] = {}

    def rebuild(n: AddNode) -> AddNode:
        key = id(n)
        if key in memo:
            return memo[key]
        if isinstance(n, VarNode):
            out = VarNode(n.var, [rebuild(c) for c in n.children], n.source)
        elif isinstance(n, OpSum):
            out = OpSum([rebuild(c) for c in n.children], n.weights, n.source)
        elif isinstance(n, OpProduct):
            flat = []
            for c in n.children:
                rc = rebuild(c)
                if isinstance(rc, OpProduct):
                    flat.extend(rc.children)
                else:
                    flat.append(rc)
            out = OpProduct(flat)
        else:
            out = n
        memo[key] = out
        return out

    if not any(
        isinstance(n, OpProduct) and any(isinstance(c, OpProduct) for c in n.children) for n in a.nodes()
    ):
        return a
    return Add(rebuild(a.root), a.variable_order)


# -- summing out ----------------------------------------------------------------


def sum_out(a: Add, h_var: str, stump_add: Add, counter: Optional[OpCounter] = None) -> Add:
    """Replace every variable node over ``h_var`` by a weighted sum node."""
    if not stump_add.is_stump() or stump_add.root.var != h_var:
        raise PreconditionError(f"CPD for {h_var} is not a decision stump over {h_var}", "E406")
    if h_var not in a.hidden_vars:
        return a
    weights = tuple(c.value for c in stump_add.root.children)
    counter = counter if counter is not None else OpCounter()
    memo: Dict[int, AddNode] = {}

    def rebuild(n: AddNode) -> AddNode:
        key = id(n)
        if key in memo:
            return memo[key]
        if h_var not in n.hidden_vars:
            out = n
        elif isinstance(n, VarNode):
            kids = [rebuild(c) for c in n.children]
            if n.var == h_var:
                if len(kids) != len(weights):
                    raise PreconditionError(
                        f"stump for {h_var} has {len(weights)} weights, node has {len(kids)} branches", "E406"
                    )
                counter.sum_out += 1
                out = OpSum(kids, weights, n.source)
            else:
                out = VarNode(n.var, kids, n.source)
        elif isinstance(n, OpSum):
            out = OpSum([rebuild(c) for c in n.children], n.weights, n.source)
        else:
            out = OpProduct([rebuild(c) for c in n.children])
        memo[key] = out
        return out

    return Add(rebuild(a.root), a.variable_order)
