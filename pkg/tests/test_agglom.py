import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from support import KINDS, random_cluster, random_unit, ref_object_dissim

from symclust import Leader, Schema, SymbolicObject, agglomerate, between_dissim, merged_leader
from symclust.agglom import (
    MergeRecord,
    cut_merges,
    definitional_between,
    k_at_height,
    largest_gap_k,
    ward_special_cases_check,
)
from symclust.dissim import compute_aggregates, object_dissim, optimal_leader

S1 = Schema.simple([1])


def single(uid, p, w=1.0):
    return SymbolicObject(id=uid, f=(np.array([p]),), n=(1.0,), p=(np.array([p]),), w=(np.array([w]),))


def brute_force_error(C, s, kind):
    T = optimal_leader(C, s, kind)
    return sum(ref_object_dissim(x, T, s.alpha, kind) for x in C)


class TestMergedLeader:
    def test_d1_weighted(self):
        z = merged_leader(compute_aggregates([single("u", 0.2)]), compute_aggregates([single("v", 0.4, 3.0)]), "d1")
        assert z.t[0][0] == pytest.approx(0.35, abs=1e-15)

    @pytest.mark.parametrize("kind", KINDS)
    def test_identical_leaders(self, kind):
        a = compute_aggregates([single("u", 0.3, 2.0)])
        b = compute_aggregates([single("v", 0.3, 5.0)])
        assert merged_leader(a, b, kind).t[0][0] == pytest.approx(0.3, rel=1e-15)

    def test_d5(self):
        z = merged_leader(compute_aggregates([single("u", 0.2)]), compute_aggregates([single("v", 0.4)]), "d5")
        assert z.t[0][0] == pytest.approx(2 / 7.5, rel=1e-15)


class TestBetweenDissim:
    def test_identical_d1(self):
        a = compute_aggregates([single("u", 0.3, 2.0)])
        b = compute_aggregates([single("v", 0.3, 5.0)])
        assert between_dissim(a, b, "d1", S1) == 0.0

    def test_d1_singletons(self):
        a, b = compute_aggregates([single("u", 0.2)]), compute_aggregates([single("v", 0.4)])
        assert between_dissim(a, b, "d1", S1) == pytest.approx(0.02, abs=1e-16)

    def test_d3_singletons(self):
        a, b = compute_aggregates([single("u", 0.2)]), compute_aggregates([single("v", 0.4)])
        z = math.sqrt(0.1)
        expected = (0.2 - z) ** 2 / z + (0.4 - z) ** 2 / z
        assert between_dissim(a, b, "d3", S1) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(brute_force_error([single("u", 0.2), single("v", 0.4)], S1, "d3"), rel=1e-13)

    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_definition(self, kind):
        rng = np.random.default_rng(KINDS.index(kind))
        s = Schema.simple([3, 2], alpha=[0.4, 1.7])
        for _ in range(20):
            Cu = random_cluster(rng, int(rng.integers(1, 6)), [3, 2], prefix="u")
            Cv = random_cluster(rng, int(rng.integers(1, 6)), [3, 2], prefix="v")
            closed = between_dissim(compute_aggregates(Cu), compute_aggregates(Cv), kind, s)
            assert closed == pytest.approx(definitional_between(Cu, Cv, s, kind), rel=1e-9, abs=1e-13)

    def test_zero_leader_side_under_d2(self):
        # Cu has no mass on the first component, so its leader there is 0
        Cu = [SymbolicObject.from_frequencies("u", [[0, 4]], w=2.0)]
        Cv = [SymbolicObject.from_frequencies("v", [[3, 1]], w=1.0)]
        s = Schema.simple([2])
        closed = between_dissim(compute_aggregates(Cu), compute_aggregates(Cv), "d2", s)
        assert closed == pytest.approx(definitional_between(Cu, Cv, s, "d2"), rel=1e-12)


class TestWardSpecialCases:
    def test_singletons(self):
        s = Schema.simple([3])
        x = SymbolicObject.from_frequencies("x", [[1, 2, 3]], w=1.0)
        y = SymbolicObject.from_frequencies("y", [[4, 0, 1]], w=1.0)
        rep = ward_special_cases_check([x], [y], s)
        assert rep["applicable"] and rep["ok"]
        assert rep["general"] == pytest.approx(0.5 * object_dissim(x, Leader.of(y), s, "d1"), rel=1e-15)

    def test_two_and_one(self):
        s = Schema.simple([3])
        Cu = [SymbolicObject.from_frequencies(f"x{i}", [f], w=1.0) for i, f in enumerate([[1, 2, 3], [2, 2, 0]])]
        Cv = [SymbolicObject.from_frequencies("y", [[4, 0, 1]], w=1.0)]
        rep = ward_special_cases_check(Cu, Cv, s)
        u, v = optimal_leader(Cu, s, "d1"), optimal_leader(Cv, s, "d1")
        expected = 2 / 3 * float(np.sum((u.t[0] - v.t[0]) ** 2))
        assert rep["ok"]
        assert rep["special"] == pytest.approx(expected, rel=1e-14)
        assert rep["general"] == pytest.approx(definitional_between(Cu, Cv, s, "d1"), rel=1e-12)

    def test_not_applicable_with_other_weights(self):
        s = Schema.simple([2])
        x = SymbolicObject.from_frequencies("x", [[1, 2]])
        y = SymbolicObject.from_frequencies("y", [[2, 1]])
        rep = ward_special_cases_check([x], [y], s)
        assert not rep["applicable"]
        assert rep["reason"]


class TestAgglomerate:
    def test_two_items(self):
        xs = [single("a", 0.2), single("b", 0.4)]
        tree = agglomerate(xs, S1, "d1")
        assert len(tree.merges) == 1
        assert tree.merges[0] == MergeRecord(left=0, right=1, height=tree.merges[0].height, new_node=2)
        assert tree.merges[0].height == pytest.approx(0.02, abs=1e-16)

    def test_collinear_singletons(self):
        xs = [single("a", 0.1), single("b", 0.2), single("c", 0.9)]
        tree = agglomerate(xs, S1, "d1")
        assert (tree.merges[0].left, tree.merges[0].right) == (0, 1)
        assert tree.merges[0].height == pytest.approx(0.005, abs=1e-16)
        assert (tree.merges[1].left, tree.merges[1].right) == (2, 3)
        pair_costs = {
            (i, j): brute_force_error([xs[i], xs[j]], S1, "d1") for i, j in itertools.combinations(range(3), 2)
        }
        assert min(pair_costs, key=pair_costs.get) == (0, 1)

    def test_identical_pairs_merge_at_zero(self):
        xs = [single("a", 0.2), single("b", 0.7), single("c", 0.2), single("d", 0.7)]
        tree = agglomerate(xs, S1, "d1")
        assert [m.height for m in tree.merges[:2]] == [0.0, 0.0]
        assert {(m.left, m.right) for m in tree.merges[:2]} == {(0, 2), (1, 3)}
        # equal heights resolve to the smaller node pair first
        assert (tree.merges[0].left, tree.merges[0].right) == (0, 2)

    @pytest.mark.parametrize("kind", KINDS)
    def test_greedy_choice_matches_brute_force(self, kind):
        rng = np.random.default_rng(40 + KINDS.index(kind))
        s = Schema.simple([3, 2], alpha=[1.0, 0.5])
        xs = [random_unit(rng, f"x{i}", [3, 2], scheme="custom") for i in range(6)]
        tree = agglomerate(xs, s, kind)
        clusters = {i: [x] for i, x in enumerate(xs)}
        errors = {i: 0.0 for i in clusters}
        for m in tree.merges:
            costs = {}
            for a, b in itertools.combinations(sorted(clusters), 2):
                costs[(a, b)] = brute_force_error(clusters[a] + clusters[b], s, kind) - errors[a] - errors[b]
            best = min(costs.values())
            assert costs[(m.left, m.right)] == pytest.approx(best, rel=1e-9, abs=1e-12)
            assert m.height == pytest.approx(max(costs[(m.left, m.right)], 0.0), rel=1e-9, abs=1e-12)
            clusters[m.new_node] = clusters.pop(m.left) + clusters.pop(m.right)
            errors[m.new_node] = brute_force_error(clusters[m.new_node], s, kind)

    def test_internal_nodes(self):
        rng = np.random.default_rng(8)
        s = Schema.simple([4, 3])
        xs = [random_unit(rng, f"x{i}", [4, 3]) for i in range(9)]
        tree = agglomerate(xs, s, "d1")
        assert len(tree.merges) == 8
        assert tree.root.member_count == 9
        for node in tree.nodes[9:]:
            left, right = (tree.nodes[c] for c in node.children)
            for name in ("w", "P", "Q", "H", "G", "f"):
                for i in range(2):
                    np.testing.assert_allclose(getattr(node.aggregates, name)[i],
                                               getattr(left.aggregates, name)[i] + getattr(right.aggregates, name)[i],
                                               rtol=1e-14)
            # w = n: every node leader is the pooled distribution of its members
            members = [xs[j] for j in tree.members(node.id)]
            for i in range(2):
                pooled = np.sum([x.f[i] for x in members], axis=0) / sum(x.n[i] for x in members)
                np.testing.assert_allclose(node.leader.t[i], pooled, rtol=0, atol=1e-12)

    def test_needs_two_items(self):
        with pytest.raises(ValueError):
            agglomerate([single("a", 0.2)], S1, "d1")

    def test_leaders_chain_equals_unit_tree_on_clusters(self):
        rng = np.random.default_rng(12)
        s = Schema.simple([3])
        groups = [random_cluster(rng, 3, [3], scheme="per-variable-n", prefix=f"g{g}_") for g in range(4)]
        tree = agglomerate([compute_aggregates(C) for C in groups], s, "d4")
        for m in tree.merges:
            Cu = [x for c in tree.members(m.left) for x in groups[c]]
            Cv = [x for c in tree.members(m.right) for x in groups[c]]
            assert m.height == pytest.approx(max(definitional_between(Cu, Cv, s, "d4"), 0.0), rel=1e-9, abs=1e-12)


class TestCut:
    merges = [MergeRecord(0, 2, 0.1, 4), MergeRecord(1, 3, 0.2, 5), MergeRecord(4, 5, 3.0, 6)]

    def test_extremes(self):
        assert cut_merges(self.merges, 4, 4).tolist() == [0, 1, 2, 3]
        assert cut_merges(self.merges, 4, 1).tolist() == [0, 0, 0, 0]

    def test_two_clusters(self):
        assert cut_merges(self.merges, 4, 2).tolist() == [0, 1, 0, 1]

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            cut_merges(self.merges, 4, 0)
        with pytest.raises(ValueError):
            cut_merges(self.merges, 4, 5)

    def test_height(self):
        assert k_at_height(self.merges, 4, 0.15) == 3
        assert k_at_height(self.merges, 4, 0.2) == 2
        assert k_at_height(self.merges, 4, -1.0) == 4
        assert k_at_height(self.merges, 4, 10.0) == 1

    def test_largest_gap(self):
        heights = [0.1, 0.2, 0.3, 5.0, 5.5, 30.0]
        # the jump to 30 would leave 2 clusters; the default ignores it
        assert largest_gap_k(heights, 7) == 4
        assert largest_gap_k(heights, 7, min_k=1) == 2
        assert largest_gap_k([1.0], 2) is None

    def test_inversions_flagged(self):
        xs = [single("a", 0.0, 1.0), single("b", 0.5, 1.0), single("c", 1.0, 1.0)]
        tree = agglomerate(xs, S1, "d1")
        assert tree.inversions == []
        tree.merges[1] = MergeRecord(tree.merges[1].left, tree.merges[1].right, 0.0, tree.merges[1].new_node)
        assert tree.inversions == [1]


finite_units = st.lists(
    st.tuples(st.lists(st.integers(0, 5), min_size=3, max_size=3).filter(lambda f: sum(f) > 0),
              st.floats(0.1, 4.0)),
    min_size=2, max_size=5,
)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), a=finite_units, b=finite_units)
def test_between_is_symmetric_and_nonnegative(kind, a, b):
    Cu = [SymbolicObject.from_frequencies(f"u{i}", [f], w=w) for i, (f, w) in enumerate(a)]
    Cv = [SymbolicObject.from_frequencies(f"v{i}", [f], w=w) for i, (f, w) in enumerate(b)]
    s = Schema.simple([3])
    ua, va = compute_aggregates(Cu), compute_aggregates(Cv)
    d_uv = between_dissim(ua, va, kind, s)
    assert d_uv == between_dissim(va, ua, kind, s)
    assert d_uv >= -1e-12
