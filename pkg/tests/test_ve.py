import itertools

import pytest
from hypothesis import given

from models import spns
from spnbn.add import Add, OpCounter, OpProduct, OpSum, TerminalDistLeaf, TerminalReal, VarNode, add_evaluate, multiply, stump
from spnbn.bn import BayesNet, HiddenVar, bn_joint_table, to_bn
from spnbn.errors import PreconditionError, StructureError
from spnbn.harness import DECOMPOSABLE, GenConfig, generate
from spnbn.normal_form import to_normal
from spnbn.spn_core import DIST, PRODUCT, SUM, SpnBuilder, Variable, all_assignments, distribution, spn_size, validate
from spnbn.ve import (
    canonical_hash,
    eliminate,
    elimination_order,
    elimination_steps,
    flattened_size,
    isomorphic,
    roundtrip,
    symbolic_to_spn,
)


def final_table(a: Add, variables):
    names = [v.name for v in variables]
    return [add_evaluate(a, {}, dict(zip(names, map(int, row)))) for row in all_assignments(variables)]


class TestEliminate:
    def test_worked_example_mixture(self, worked_bn):
        out = eliminate(worked_bn)
        root = out.root
        assert isinstance(root, OpSum) and len(root.children) == 3
        for c in root.children:
            assert isinstance(c, OpProduct)
            assert all(isinstance(g, TerminalDistLeaf) for g in c.children)
        vals = final_table(out, worked_bn.observable_vars)
        assert vals == pytest.approx([594 / 3500, 1776 / 3500, 306 / 3500, 824 / 3500], abs=1e-12)

    def test_order_is_reverse_topological(self, worked_bn):
        assert elimination_order(worked_bn) == tuple(reversed(worked_bn.hidden_order))

    def test_zero_hidden(self):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        g = b.build(b.prod([b.dist("X1", [0.3, 0.7]), b.dist("X2", [0.5, 0.5])]))
        out = eliminate(to_bn(g))
        assert isinstance(out.root, OpProduct) and len(out.root.children) == 2

    def test_hidden_in_no_factor(self, worked_bn):
        lonely = BayesNet(
            worked_bn.hidden_vars + (HiddenVar("H_77", 2, 77),),
            worked_bn.observable_vars,
            worked_bn.edges,
            {**worked_bn.cpds, "H_77": stump("H_77", (0.5, 0.5))},
            worked_bn.hidden_order + ("H_77",),
        )
        with pytest.raises(StructureError) as e:
            eliminate(lonely)
        assert e.value.code == "E408"

    @given(spns(max_vars=5))
    def test_matches_distribution(self, spn):
        s = to_normal(spn)[0]
        bn = to_bn(s)
        counter = OpCounter()
        out = eliminate(bn, counter)
        ref = distribution(s).values.tolist()
        assert final_table(out, s.variables) == pytest.approx(ref, abs=1e-9)
        n = len(s.variables)
        assert counter.products <= n - 1
        assert counter.multiply + counter.sum_out <= n * spn_size(s)

    @given(spns(max_vars=4))
    def test_each_step_preserves_marginal(self, spn):
        s = to_normal(spn)[0]
        bn = to_bn(s)
        ref = distribution(s)
        names = [v.name for v in bn.observable_vars]
        eliminated = []
        for step in elimination_steps(bn):
            eliminated.append(step.variable)
            assert all(step.variable not in f.hidden_vars for f in step.factors)
            # the product of the remaining factors, summed over the hidden
            # variables still present, is the unchanged marginal
            prod = step.factors[0]
            for f in step.factors[1:]:
                prod = multiply(prod, f)
            remaining = sorted(prod.hidden_vars)
            doms = [bn.hidden[h].domain_size for h in remaining]
            weights = {h: bn.stump_weights(h) for h in remaining}
            for row in all_assignments(bn.observable_vars):
                x = dict(zip(names, map(int, row)))
                total = 0.0
                for combo in itertools.product(*map(range, doms)):
                    hw = 1.0
                    for h, k in zip(remaining, combo):
                        hw *= weights[h][k]
                    total += hw * add_evaluate(prod, dict(zip(remaining, combo)), x)
                assert total == pytest.approx(ref[x], abs=1e-9)
        assert eliminated == list(elimination_order(bn))


class TestSymbolicToSpn:
    def test_worked_example(self, worked_normal, worked_bn):
        rec = symbolic_to_spn(eliminate(worked_bn), worked_bn.observable_vars)
        assert validate(rec).normal
        assert distribution(rec).max_deviation(distribution(worked_normal)) <= 1e-12
        assert rec.root == worked_normal.root

    def test_product_of_stumps(self):
        a = Add(OpProduct([TerminalDistLeaf("A", (0.2, 0.8)), TerminalDistLeaf("B", (0.5, 0.5))]))
        rec = symbolic_to_spn(a)
        assert rec.nodes[rec.root].kind == PRODUCT
        assert sorted(rec.nodes[c].kind for c in rec.children[rec.root]) == [DIST, DIST]
        assert [v.name for v in rec.variables] == ["A", "B"]

    def test_residual_hidden(self, worked_bn):
        with pytest.raises(PreconditionError) as e:
            symbolic_to_spn(worked_bn.cpds["X1"])
        assert e.value.code == "E407"

    def test_constant_terminal(self):
        with pytest.raises(PreconditionError) as e:
            symbolic_to_spn(Add(OpProduct([TerminalDistLeaf("A", (0.2, 0.8)), TerminalReal(2.0)])))
        assert e.value.code == "E409"

    def test_parallel_edges_merge(self):
        leaf = TerminalDistLeaf("A", (0.2, 0.8), source=3)
        rec = symbolic_to_spn(Add(OpSum([leaf, leaf], (0.25, 0.75))))
        assert rec.weights[rec.root] == (1.0,)

    @given(spns(max_vars=6))
    def test_random_round_trip_is_normal(self, spn):
        s = to_normal(spn)[0]
        rec = symbolic_to_spn(eliminate(to_bn(s)), s.variables)
        rep = validate(rec)
        assert rep.normal
        assert distribution(rec).max_deviation(distribution(s)) <= 1e-9


class TestIsomorphism:
    def test_renaming_invariant(self, worked_normal):
        shifted = symbolic_to_spn(eliminate(to_bn(worked_normal)), worked_normal.variables)
        assert canonical_hash(shifted) == canonical_hash(worked_normal)
        assert isomorphic(shifted, worked_normal)

    def test_weights_matter(self, worked_normal):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        p = b.prod([b.dist("X1", [0.6, 0.4]), b.dist("X2", [0.3, 0.7])])
        q = b.prod([b.dist("X1", [0.9, 0.1]), b.dist("X2", [0.2, 0.8])])
        other = b.build(b.sum([p, q], [0.5, 0.5]))
        assert not isomorphic(other, worked_normal)

    def test_product_chains_contract(self):
        b = SpnBuilder([("A", 2), ("B", 2), ("C", 2)])
        la, lb, lc = b.dist("A", [0.1, 0.9]), b.dist("B", [0.2, 0.8]), b.dist("C", [0.3, 0.7])
        nested = b.build(b.prod([b.prod([la, lb]), lc]))
        b2 = SpnBuilder([("A", 2), ("B", 2), ("C", 2)])
        flat = b2.build(b2.prod([b2.dist("C", [0.3, 0.7]), b2.dist("A", [0.1, 0.9]), b2.dist("B", [0.2, 0.8])]))
        assert isomorphic(nested, flat)
        assert flattened_size(nested) == flattened_size(flat) == spn_size(flat)


class TestRoundTrip:
    def test_worked_example(self, worked):
        rep = roundtrip(worked)
        assert rep.passed and rep.max_deviation <= 1e-9
        assert rep.sizes == (29, 17, 24, 17)
        assert rep.isomorphic
        assert rep.op_counts["multiplications"] == 1
        assert "pass: true" in rep.render()

    def test_point_mass(self):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        g = b.build(b.prod([b.ind("X1", 1), b.ind("X2", 0)]))
        rep = roundtrip(g)
        assert rep.passed
        assert distribution(rep.recovered).values.tolist() == [0, 0, 1, 0]

    def test_shared_child_reconstruction(self, shared_child_reconstruction):
        assert roundtrip(shared_child_reconstruction[0]).passed

    @given(spns(max_vars=8))
    def test_random(self, spn):
        rep = roundtrip(spn)
        assert rep.passed, rep.render()
        again = roundtrip(rep.recovered)
        assert again.passed and again.sizes.recovered <= rep.sizes.recovered


def test_multivalued_round_trip():
    spn = generate(GenConfig(4, 50, 3, 11, DECOMPOSABLE, max_domain=4))
    assert roundtrip(spn).passed


def test_hidden_order_is_topological(worked_bn):
    s = to_normal(generate(GenConfig(5, 60, 3, 2)))[0]
    bn = to_bn(s)
    pos = {h: i for i, h in enumerate(bn.hidden_order)}
    for v, n in s.nodes.items():
        if n.kind != SUM:
            continue
        for c in s.children[v]:
            for d in [d for d in s.nodes if s.nodes[d].kind == SUM and d in _below(s, c)]:
                assert pos[f"H_{v}"] < pos[f"H_{d}"]
    assert bn_joint_table(bn).total() == pytest.approx(1.0)
    assert isinstance(worked_bn.observable_vars[0], Variable)
    assert all(isinstance(a.root, (VarNode, TerminalDistLeaf)) for a in bn.cpds.values())


def _below(s, v):
    seen, stack = set(), [v]
    while stack:
        u = stack.pop()
        if u not in seen:
            seen.add(u)
            stack.extend(s.children[u])
    return seen
