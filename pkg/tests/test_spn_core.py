import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from models import build_factored_product, spns
from spnbn.errors import DegenerateError, EnumerationLimitError, InputError, StructureError
from spnbn.spn_core import (
    DIST,
    INDICATOR,
    JointTable,
    SpnBuilder,
    SpnGraph,
    SpnNode,
    Variable,
    all_assignments,
    compute_scopes,
    distribution,
    evaluate,
    evidence_indicators,
    expand_polynomial,
    partition_function,
    query,
    size_metrics,
    validate,
)

BOOL2 = [Variable("X1"), Variable("X2")]


def ones(spn, value=1.0):
    return {(v.name, i): value for v in spn.variables for i in range(v.domain_size)}


class TestScopes:
    def test_indicator_scope(self):
        b = SpnBuilder([("X1", 2)])
        g = b.build(b.ind("X1", 0))
        assert compute_scopes(g)[g.root] == {"X1"}

    def test_worked_example_root_scope(self, worked):
        assert compute_scopes(worked)[worked.root] == {"X1", "X2"}

    def test_product_is_union(self):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        p = b.prod([b.ind("X1", 0), b.ind("X2", 1)])
        g = b.build(p)
        assert g.scopes[p] == frozenset({"X1", "X2"})

    def test_cycle_is_structural_error(self):
        nodes = [SpnNode(0, "prod"), SpnNode(1, "prod"), SpnNode(2, INDICATOR, "X1", 0)]
        with pytest.raises(StructureError) as e:
            SpnGraph(nodes, {0: (1,), 1: (0, 2)}, {}, 0, [Variable("X1")])
        assert e.value.code == "E106"


class TestValidate:
    def test_worked_example_flags(self, worked):
        rep = validate(worked)
        assert (rep.complete, rep.consistent, rep.decomposable, rep.normal) == (True, True, True, False)
        assert any(node == worked.root and prop == "normalized" for node, prop, _ in rep.offending_nodes)

    def test_shared_same_polarity_is_consistent(self):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        x1 = b.ind("X1", 0)
        p = b.prod([x1, b.prod([x1, b.ind("X2", 0)])])
        rep = validate(b.build(p))
        assert rep.consistent and not rep.decomposable
        assert rep.offending_nodes[0][0] == p

    def test_opposite_polarity_is_inconsistent(self):
        b = SpnBuilder([("X1", 2)])
        p = b.prod([b.ind("X1", 0), b.ind("X1", 1)])
        rep = validate(b.build(p))
        assert not rep.consistent
        assert (p, "consistent") in [(n, k) for n, k, _ in rep.offending_nodes]

    def test_incomplete_sum(self):
        b = SpnBuilder([("X1", 2), ("X2", 2)])
        s = b.sum([b.ind("X1", 0), b.ind("X2", 0)], [0.5, 0.5])
        rep = validate(b.build(s))
        assert not rep.complete and not rep.normal
        assert rep.offending_nodes[0][:2] == (s, "complete")

    def test_normal_leaf_only(self):
        b = SpnBuilder([("X1", 2)])
        g = b.build(b.dist("X1", [0.3, 0.7]))
        assert validate(g).normal

    @given(spns())
    def test_decomposable_implies_consistent(self, spn):
        rep = validate(spn)
        assert not rep.decomposable or rep.consistent
        assert not rep.normal or (rep.complete and rep.decomposable)


class TestEvaluate:
    def test_positive_literals(self, worked):
        lam = {("X1", 0): 1, ("X1", 1): 0, ("X2", 0): 1, ("X2", 1): 0}
        assert evaluate(worked, lam) == 594

    def test_all_ones(self, worked):
        assert evaluate(worked, ones(worked)) == 3500

    @given(spns())
    def test_all_zero(self, spn):
        assert evaluate(spn, ones(spn, 0.0)) == 0.0

    def test_missing_indicator(self, worked):
        lam = ones(worked)
        del lam[("X2", 1)]
        with pytest.raises(InputError) as e:
            evaluate(worked, lam)
        assert e.value.code == "E301"


class TestQuery:
    @pytest.mark.parametrize(
        "evidence, expected",
        [({"X1": 1, "X2": 0}, 306), ({"X1": 0}, 2370), ({}, 3500), ({"X1": 1, "X2": 1}, 824)],
    )
    def test_worked_example(self, worked, evidence, expected):
        assert query(worked, evidence) == expected

    def test_partition(self, worked):
        assert partition_function(worked) == 3500

    @pytest.mark.parametrize("evidence", [{"X9": 0}, {"X1": 2}, {"X1": -1}, {"X1": 0.5}])
    def test_bad_evidence(self, worked, evidence):
        with pytest.raises(InputError) as e:
            query(worked, evidence)
        assert e.value.code == "E302"

    @given(spns(max_vars=5), st.data())
    def test_partial_evidence_sums_coefficients(self, spn, data):
        coeffs = expand_polynomial(spn)
        names = [v.name for v in spn.variables]
        chosen = data.draw(st.lists(st.sampled_from(names), unique=True, max_size=len(names)))
        ev = {n: data.draw(st.integers(0, spn.var_map[n].domain_size - 1)) for n in chosen}
        rows = all_assignments(spn.variables)
        mask = np.ones(len(rows), dtype=bool)
        for n, v in ev.items():
            mask &= rows[:, names.index(n)] == v
        assert query(spn, ev) == pytest.approx(coeffs.values[mask].sum(), rel=1e-9, abs=1e-12)

    @given(spns(max_vars=4))
    def test_one_hot_matches_polynomial(self, spn):
        coeffs = expand_polynomial(spn)
        for row, c in zip(all_assignments(spn.variables), coeffs.values):
            ev = {v.name: int(x) for v, x in zip(spn.variables, row)}
            assert query(spn, ev) == pytest.approx(c, rel=1e-12, abs=1e-15)


class TestDistribution:
    def test_worked_example_entry(self, worked):
        d = distribution(worked)
        assert d[(0, 0)] == pytest.approx(594 / 3500, abs=1e-12)
        assert d[{"X1": 1, "X2": 1}] == pytest.approx(824 / 3500, abs=1e-12)
        assert d.total() == pytest.approx(1.0, abs=1e-12)

    def test_single_leaf(self):
        b = SpnBuilder([("X1", 2)])
        d = distribution(b.build(b.dist("X1", [0.3, 0.7])))
        assert d.values.tolist() == [0.3, 0.7]

    def test_zero_partition(self):
        b = SpnBuilder([("X1", 2)])
        g = b.build(b.sum([b.ind("X1", 0), b.ind("X1", 1)], [0, 0]))
        with pytest.raises(DegenerateError) as e:
            distribution(g)
        assert e.value.code == "E502"

    def test_enumeration_cap(self, worked):
        with pytest.raises(EnumerationLimitError) as e:
            distribution(worked, max_enum_vars=1)
        assert e.value.code == "E601"

    @given(spns())
    def test_sums_to_one(self, spn):
        assert distribution(spn).total() == pytest.approx(1.0, abs=1e-9)


class TestExpandPolynomial:
    def test_factored_product(self):
        assert expand_polynomial(build_factored_product()).values.tolist() == [4, 6, 36, 54]

    def test_worked_example(self, worked):
        assert expand_polynomial(worked).values.tolist() == [594, 1776, 306, 824]

    def test_single_indicator(self):
        b = SpnBuilder([("X1", 2)])
        assert expand_polynomial(b.build(b.ind("X1", 0))).values.tolist() == [1, 0]

    def test_multivalued(self):
        b = SpnBuilder([("A", 3), ("B", 2)])
        p = b.prod([b.dist("A", [0.2, 0.3, 0.5]), b.ind("B", 1)])
        t = expand_polynomial(b.build(p))
        assert t.shape == (3, 2)
        assert t.values.tolist() == pytest.approx([0, 0.2, 0, 0.3, 0, 0.5])


class TestSizeMetrics:
    def test_worked_example(self, worked):
        assert size_metrics(worked) == (12, 17, 29, 3)

    def test_single_leaf(self):
        b = SpnBuilder([("X1", 2)])
        assert size_metrics(b.build(b.ind("X1", 0))) == (1, 0, 1, 0)

    def test_chain_height(self):
        b = SpnBuilder([("X1", 2)])
        s = b.sum([b.prod([b.ind("X1", 0)])], [1.0])
        assert size_metrics(b.build(s)).height == 2


class TestScopeSoundness:
    @given(spns(max_vars=4))
    def test_outside_scope_constant(self, spn):
        for v in spn.nodes:
            sub = spn.subgraph(v)
            scope = spn.scopes[v]
            base = ones(spn)
            ref = evaluate(sub, base)
            for var in spn.variables:
                if var.name in scope:
                    continue
                for i in range(var.domain_size):
                    lam = dict(base)
                    lam[(var.name, i)] = 0.0
                    assert evaluate(sub, lam) == ref


class TestJointTable:
    def test_reorder_and_marginal(self, worked):
        t = expand_polynomial(worked)
        r = t.reorder(["X2", "X1"])
        assert r[(1, 0)] == t[(0, 1)] == 1776
        assert t.marginal(["X1"]).values.tolist() == [2370, 1130]
        assert t.max_deviation(r) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            JointTable(BOOL2, [1, 2, 3])

    def test_all_assignments_order(self):
        rows = all_assignments(BOOL2)
        assert rows.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def _graph(nodes, children, weights, root=0, variables=BOOL2):
    return SpnGraph(nodes, children, weights, root, variables)


@pytest.mark.parametrize(
    "code, make",
    [
        ("E101", lambda: _graph([SpnNode(0, "prod")], {0: (5,)}, {})),
        ("E101", lambda: _graph([SpnNode(0, "prod")], {3: ()}, {})),
        ("E101", lambda: _graph([SpnNode(0, "prod")], {0: ()}, {4: (1.0,)})),
        ("E102", lambda: _graph([SpnNode(0, "prod"), SpnNode(0, "sum")], {}, {})),
        ("E103", lambda: _graph([SpnNode(0, INDICATOR, "X1", 0)], {}, {}, root=7)),
        (
            "E104",
            lambda: _graph(
                [SpnNode(0, "prod"), SpnNode(1, INDICATOR, "X1", 0), SpnNode(2, INDICATOR, "X2", 0)],
                {0: (1, 2)},
                {0: (1.0, 1.0)},
            ),
        ),
        ("E105", lambda: _graph([SpnNode(0, "sum"), SpnNode(1, INDICATOR, "X1", 0)], {0: (1,)}, {})),
        ("E107", lambda: _graph([SpnNode(0, INDICATOR, "X1", 0), SpnNode(1, INDICATOR, "X2", 0)], {}, {})),
        ("E108", lambda: _graph([SpnNode(0, "prod")], {}, {})),
        (
            "E109",
            lambda: _graph([SpnNode(0, "prod"), SpnNode(1, INDICATOR, "X1", 0)], {0: (1, 1)}, {}),
        ),
        ("E110", lambda: _graph([SpnNode(0, INDICATOR, "Q", 0)], {}, {}, variables=[])),
        ("E111", lambda: _graph([SpnNode(0, INDICATOR, "X1", 0)], {}, {}, variables=[Variable("X1")] * 2)),
        ("E112", lambda: _graph([SpnNode(0, INDICATOR, "X1", 2)], {}, {}, variables=[Variable("X1")])),
        ("E112", lambda: _graph([SpnNode(0, DIST, "X1", probs=(0.5, 0.6))], {}, {}, variables=[Variable("X1")])),
        ("E112", lambda: Variable("X1", 1)),
        ("E113", lambda: _graph([SpnNode(0, INDICATOR, "X1", 0)], {}, {})),
        (
            "E114",
            lambda: _graph(
                [SpnNode(0, "sum"), SpnNode(1, INDICATOR, "X1", 0)], {0: (1,)}, {0: (-1.0,)},
                variables=[Variable("X1")],
            ),
        ),
        (
            "E115",
            lambda: _graph(
                [SpnNode(0, INDICATOR, "X1", 0), SpnNode(1, INDICATOR, "X1", 1)], {0: (1,)}, {},
                variables=[Variable("X1")],
            ),
        ),
        ("E201", lambda: _graph([SpnNode(0, "max")], {}, {})),
    ],
)
def test_structural_error_codes(code, make):
    with pytest.raises(StructureError) as e:
        make()
    assert e.value.code == code
    assert e.value.render().startswith(f"error[{code}]: ")


def test_builder_shares_indicators():
    b = SpnBuilder([("X1", 2)])
    assert b.ind("X1", 0) == b.ind("X1", 0)
    assert b.ind("X1", 0, shared=False) != b.ind("X1", 0)


def test_builder_prunes_unreachable():
    b = SpnBuilder([("X1", 2)])
    b.ind("X1", 1)
    g = b.build(b.ind("X1", 0))
    assert len(g.nodes) == 1


def test_evidence_indicators_marginalizes_unset(worked):
    lam = evidence_indicators(worked, {"X1": 1})
    assert lam == {("X1", 0): 0.0, ("X1", 1): 1.0, ("X2", 0): 1.0, ("X2", 1): 1.0}


def test_subgraph_polynomials(worked):
    # each root branch contributes weight * product of its two leaf sums
    branches = [expand_polynomial(worked.subgraph(c)).values for c in worked.children[worked.root]]
    total = sum(w * b for w, b in zip(worked.weights[worked.root], branches))
    assert total.tolist() == [594, 1776, 306, 824]
    assert list(itertools.chain(*[c.tolist() for c in branches]))[:4] == [36, 84, 24, 56]
