"""Random SPN generation and the sweep drivers built on it."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from .add import OpCounter
from .bn import bn_size, to_bn
from .errors import SpnError, StructureError
from .normal_form import to_normal
from .spn_core import TOLERANCE, SpnBuilder, SpnGraph, spn_size, validate
from .ve import RoundTripReport, RoundTripSizes, eliminate, roundtrip

DECOMPOSABLE = "decomposable"
NONDECOMPOSABLE = "consistent_nondecomposable"
MODES = (DECOMPOSABLE, NONDECOMPOSABLE)
MAX_GEN_VARS = 16
MAX_MIXTURE = 8


@dataclass(frozen=True)
class GenConfig:
    num_vars: int
    target_nodes: int
    max_fanout: int = 3
    seed: int = 0
    mode: str = DECOMPOSABLE
    max_domain: int = 2
    dist_leaf_prob: float = 0.25
    reuse_prob: float = 0.3

    def check(self):
        if self.mode not in MODES:
            raise StructureError(f"unknown generator mode {self.mode!r}", "E801")
        if not 1 <= self.num_vars <= MAX_GEN_VARS:
            raise StructureError(f"num_vars must be in 1..{MAX_GEN_VARS}, got {self.num_vars}", "E801")
        if self.mode == NONDECOMPOSABLE and self.num_vars < 2:
            raise StructureError("a non-decomposable SPN needs at least two variables", "E801")
        if self.target_nodes < min_nodes(self.num_vars):
            raise StructureError(
                f"target_nodes={self.target_nodes} is too small for {self.num_vars} variables "
                f"(need at least {min_nodes(self.num_vars)})",
                "E801",
            )
        if self.max_fanout < 2 or self.max_domain < 2:
            raise StructureError("max_fanout and max_domain must be at least 2", "E801")


def min_nodes(num_vars: int) -> int:
    return 3 * num_vars + 2


class _Generator:
    def __init__(self, cfg: GenConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        names = [f"X{i + 1}" for i in range(cfg.num_vars)]
        doms = [2 if cfg.max_domain == 2 else rng.randint(2, cfg.max_domain) for _ in names]
        self.b = SpnBuilder(name=f"gen{cfg.seed}")
        for n, d in zip(names, doms):
            self.b.var(n, d)
        self.dom = dict(zip(names, doms))
        self.leaves: Dict[str, List[int]] = {n: [] for n in names}
        self.products: Dict[FrozenSet[str], List[int]] = {}
        self.scope: Dict[int, FrozenSet[str]] = {}
        self.injected = 0
        self.duplicated = 0

    def weight(self):
        return 1.0 - self.rng.random()

    def leaf(self, var):
        pool = self.leaves[var]
        if pool and self.rng.random() < self.cfg.reuse_prob:
            return self.rng.choice(pool)
        d = self.dom[var]
        if self.rng.random() < self.cfg.dist_leaf_prob:
            ws = [self.weight() for _ in range(d)]
            t = sum(ws)
            node = self.b.dist(var, [w / t for w in ws])
        else:
            node = self.b.sum([self.b.ind(var, v) for v in range(d)], [self.weight() for _ in range(d)])
        pool.append(node)
        self.scope[node] = frozenset((var,))
        return node

    def used(self):
        return self.b._next

    def build(self, scope: Tuple[str, ...], budget: int) -> int:
        if len(scope) == 1:
            return self.leaf(scope[0])
        m = len(scope)
        cheapest = m + 1
        end = self.used() + budget
        k = self.rng.randint(2, self.cfg.max_fanout)
        while k > 1 and 1 + k * cheapest > budget:
            k -= 1
        if k == 1:
            node, _ = self.product(scope, budget)
            return node
        kids: List[int] = []
        key = frozenset(scope)

        def add(node):
            if node not in kids:
                kids.append(node)

        for i in range(k):
            pool = [p for p in self.products.get(key, ()) if p not in kids]
            if kids and pool and self.rng.random() < self.cfg.reuse_prob:
                add(self.rng.choice(pool))
                continue
            per = max(cheapest, (end - self.used() - 1) // (k - i))
            node, sibling = self.product(scope, per)
            add(node)
            if sibling is not None:
                add(sibling)
        # spend what is left of this node's share on further mixture components
        while end - self.used() - 1 >= 2 * cheapest and len(kids) < MAX_MIXTURE:
            node, sibling = self.product(scope, end - self.used() - 1)
            add(node)
            if sibling is not None:
                add(sibling)
        if len(kids) == 1:
            return kids[0]
        node = self.b.sum(kids, [self.weight() for _ in kids])
        self.scope[node] = key
        return node

    def _partition(self, scope, blocks):
        scope = list(scope)
        self.rng.shuffle(scope)
        cuts = sorted(self.rng.sample(range(1, len(scope)), blocks - 1))
        parts = [scope[i:j] for i, j in zip([0] + cuts, cuts + [len(scope)])]
        return [tuple(sorted(p)) for p in parts]

    def product(self, scope, budget) -> Tuple[int, Optional[int]]:
        m = len(scope)
        blocks = self.rng.randint(2, min(self.cfg.max_fanout, m))
        inject = self.cfg.mode == NONDECOMPOSABLE and self.rng.random() < 0.35
        if inject:
            x = self.rng.choice(scope)
            rest = tuple(v for v in scope if v != x)
            parts = [(x,)] + (self._partition(rest, min(blocks - 1, len(rest))) if len(rest) > 1 else [rest])
        else:
            parts = self._partition(scope, blocks)
        end = self.used() + budget
        kids: List[Optional[int]] = []
        for i, p in enumerate(parts):
            if inject and i == 0:
                # the singleton block of an injection becomes a bare indicator
                kids.append(None)
                continue
            share = (end - self.used() - 1) // (len(parts) - i)
            kids.append(self.build(p, max(len(p) + 1, share)))
        per = max(2, (end - self.used() - 1) // 2)
        sibling = None
        if inject:
            kids, sibling = self._inject(parts, kids, scope, per)
        node = self.b.prod(kids)
        self.scope[node] = frozenset(scope)
        if not inject:
            self.products.setdefault(frozenset(scope), []).append(node)
        return node, sibling

    def _inject(self, parts, kids, scope, per):
        """Share I[x*] between two children: consistent, not decomposable."""
        (x,) = parts[0]
        value = self.rng.randrange(self.dom[x])
        ind = self.b.ind(x, value)
        j = self.rng.randrange(1, len(kids))
        widened = self.b.prod([kids[j], ind])
        self.scope[widened] = frozenset(parts[j]) | {x}
        new_kids = [ind] + [widened if i == j else k for i, k in enumerate(kids[1:], start=1)]
        self.injected += 1
        sibling = None
        if self.rng.random() < 0.5:
            others = tuple(sorted(set(scope) - self.scope[widened]))
            extra = [widened] + ([self.build(others, per)] if others else [])
            sibling = widened if len(extra) == 1 else self.b.prod(extra)
            self.duplicated += 1
        return new_kids, sibling


def generate(config: GenConfig) -> SpnGraph:
    """Deterministic random SPN for the given configuration."""
    config.check()
    rng = random.Random(config.seed)
    for _ in range(100):
        g = _Generator(config, rng)
        scope = tuple(sorted(g.dom))
        budget = config.target_nodes - sum(g.dom.values())
        root = g.build(scope, budget)
        if config.mode == NONDECOMPOSABLE and not g.injected:
            continue
        spn = g.b.build(root)
        report = validate(spn)
        want_dec = config.mode == DECOMPOSABLE
        if report.complete and report.consistent and report.decomposable == want_dec:
            return spn
        raise StructureError(f"generator produced unexpected flags {report.flags()}", "E801")
    raise StructureError("could not inject a shared indicator; increase target_nodes", "E801")


def alternating_spn(height: int = 9, seed: int = 0) -> SpnGraph:
    """Normal SPN of the given odd height whose deepest variable has (height-1)/2 sum ancestors.

    The root is a product; each level below alternates a sum over two
    products with a product that pairs the next sum with a fresh leaf.
    """
    if height < 3 or height % 2 == 0:
        raise StructureError("alternating SPN needs an odd height of at least 3", "E801")
    rng = random.Random(seed)
    n_sums = (height - 1) // 2
    names = [f"X{i + 1}" for i in range(n_sums + 2)]
    b = SpnBuilder(name=f"alt{height}")
    for n in names:
        b.var(n)

    def dist(var):
        p = 0.05 + 0.9 * rng.random()
        return b.dist(var, [p, 1.0 - p])

    # innermost product over the last two variables, then wrap outward
    deep = b.prod([dist(names[-1]), dist(names[-2])])
    scope = [names[-2], names[-1]]
    for level in range(n_sums):
        alt = b.prod([dist(v) for v in scope])
        w = rng.random()
        s = b.sum([deep, alt], [0.1 + 0.8 * w, 0.9 - 0.8 * w])
        var = names[-3 - level]
        deep = b.prod([s, dist(var)])
        scope = [var] + scope
    return b.build(deep)


def sweep_roundtrip(configs: Sequence[GenConfig], tolerance: float = TOLERANCE) -> List[RoundTripReport]:
    """Round-trip every generated instance; failures are recorded, not raised."""
    out = []
    for cfg in configs:
        try:
            out.append(roundtrip(generate(cfg), tolerance))
        except SpnError as exc:
            out.append(
                RoundTripReport(
                    math.inf, RoundTripSizes(0, 0, 0, 0), {}, False, False, False, tolerance, exc.render()
                )
            )
    return out


class SweepSummary(NamedTuple):
    total: int
    passed: int
    worst_deviation: float


def summarize(reports: Sequence[RoundTripReport]) -> SweepSummary:
    return SweepSummary(
        len(reports), sum(r.passed for r in reports), max((r.max_deviation for r in reports), default=0.0)
    )


CONVERT_C = 3  # to_bn operations ≤ 2N|S| + 3|S| ≤ CONVERT_C·N|S| for N ≥ 3
VE_C = 1  # elimination operations ≤ (N - 1)|S| + |S| = N|S|


class ScalingRow(NamedTuple):
    target_nodes: int
    spn_size: int
    bn_size: int
    bn_bound: int
    convert_ops: int
    ve_ops: int
    bn_ratio: float
    convert_ratio: float
    ve_ratio: float
    within_bounds: bool


def scaling_probe(
    sizes: Sequence[int], num_vars: int = 10, seed: int = 0, max_fanout: int = 3
) -> List[ScalingRow]:
    """Measured BN size and operation counts against their explicit bounds."""
    rows = []
    for target in sizes:
        spn = generate(GenConfig(num_vars, target, max_fanout, seed, DECOMPOSABLE))
        normal, _ = to_normal(spn)
        bn = to_bn(normal)
        counter = OpCounter()
        eliminate(bn, counter)
        s = spn_size(normal)
        n = len(normal.variables)
        size = bn_size(bn, normal)
        ve_ops = counter.multiply + counter.sum_out
        ok = (
            size.total <= 3 * n * s + s
            and bn.op_count <= 2 * n * s + 3 * s
            and ve_ops <= VE_C * n * s
        )
        rows.append(
            ScalingRow(
                target, s, size.total, size.bound_rhs, bn.op_count, ve_ops,
                size.total / (n * s), bn.op_count / (n * s), ve_ops / (n * s), ok,
            )
        )
    return rows
