import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from celluq.costs import CostModel, assignment_score, make_cost_model
from celluq.model import Assignment, Detection, Frame, count_feasible
from celluq.solver import (
    count_matchings,
    encode_costs,
    encode_lap,
    solve_encoded,
    solve_map,
    top_k,
    top_k_encoded,
)
from celluq.synthetic import ambiguous_pair
from oracles import all_scores


def frames(mothers, daughters):
    return (Frame(0, [Detection(i, p) for i, p in enumerate(mothers)]),
            Frame(1, [Detection(j, p) for j, p in enumerate(daughters)]))


cost_matrices = st.integers(0, 3).flatmap(
    lambda m: st.integers(0, 4).flatmap(
        lambda n: st.lists(st.floats(0, 20, allow_nan=False), min_size=m * n, max_size=m * n)
        .map(lambda v: np.array(v, dtype=float).reshape(m, n))
    )
)
event_cost = st.floats(0, 15, allow_nan=False)


class TestEncoding:
    def test_one_by_one_is_three_by_three(self):
        assert encode_costs(np.zeros((1, 1)), 1.0, 1.0).cost_matrix.shape == (3, 3)

    def test_forced_cases(self):
        only_daughter = solve_encoded(encode_costs(np.zeros((0, 1)), 2.0, 2.0))
        assert only_daughter.assignment.canonical() == "_->0"
        only_mothers = solve_encoded(encode_costs(np.zeros((2, 0)), 2.0, 2.0))
        assert only_mothers.assignment.canonical() == "0->_ 1->_"

    def test_square_shape(self):
        enc = encode_costs(np.zeros((3, 5)), 1.0, 1.0)
        assert enc.cost_matrix.shape == (11, 11)

    def test_block_layout(self):
        w = np.array([[1.0, 2.0]])
        enc = encode_costs(w, 7.0, 5.0)
        inf = np.inf
        expected = np.array([
            [1.0, 2.0, 5.0, inf],
            [1.0, 2.0, inf, 0.0],
            [7.0, inf, 0.0, 0.0],
            [inf, 7.0, 0.0, 0.0],
        ])
        np.testing.assert_array_equal(enc.cost_matrix, expected)

    @pytest.mark.parametrize("m,n", [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)])
    def test_matchings_cover_feasible_set(self, m, n):
        # every feasible assignment is reachable and every matching decodes to one
        rng = np.random.default_rng(m * 10 + n)
        w = rng.uniform(0, 5, (m, n))
        enc = encode_costs(w, 3.0, 2.0)
        groups = count_matchings(enc)
        assert len(groups) == count_feasible(m, n)
        for a, costs in groups.items():
            assert min(costs) == pytest.approx(-enc.score(a))


class TestMap:
    def test_two_mothers(self):
        src, tgt = frames([[0, 0], [10, 0]], [[0, 1], [10, 1]])
        a = solve_map(src, tgt, make_cost_model("l2", appear_cost=50, disappear_cost=50)).assignment
        assert a.links == {(0, 0), (1, 1)}

    def test_division_preferred(self):
        src, tgt = frames([[0, 0]], [[1, 0], [-1, 0]])
        sol = solve_map(src, tgt, make_cost_model("l2", appear_cost=50, disappear_cost=50))
        assert sol.assignment.canonical() == "0->0 0->1"
        assert sol.log_score == pytest.approx(-1.0)

    def test_empty_frames(self):
        sol = solve_map(Frame(0), Frame(1), make_cost_model("l2"))
        assert sol.assignment.edges == frozenset()
        assert sol.log_score == 0.0

    def test_only_disappearances(self):
        src = Frame(0, [Detection(0, [0, 0]), Detection(1, [1, 1])])
        sol = solve_map(src, Frame(1), make_cost_model("l2", disappear_cost=3))
        assert sol.assignment.canonical() == "0->_ 1->_"
        assert sol.log_score == -6

    def test_far_daughter_appears(self):
        src, tgt = frames([[0, 0]], [[0, 0], [100, 0]])
        a = solve_map(src, tgt, make_cost_model("l2")).assignment
        assert a.canonical() == "_->1 0->0"

    def test_zero_event_costs(self):
        src, tgt = frames([[0, 0]], [[3, 0]])
        sol = solve_map(src, tgt, make_cost_model("l2", appear_cost=0, disappear_cost=0))
        assert sol.log_score == 0.0

    def test_inf_cost_is_never_linked(self):
        cm = CostModel(lambda a, b: np.inf, appear_cost=50, disappear_cost=50)
        src, tgt = frames([[0, 0]], [[0, 0]])
        assert solve_map(src, tgt, cm).assignment.links == frozenset()

    @settings(max_examples=150, deadline=None)
    @given(cost_matrices, event_cost, event_cost)
    def test_matches_exhaustive_optimum(self, w, w_a, w_d):
        best = max(s for _, s in all_scores(w, w_a, w_d))
        sol = solve_encoded(encode_costs(w, w_a, w_d))
        assert sol.log_score == pytest.approx(best, abs=1e-9)
        assert sol.log_score == pytest.approx(
            assignment_score(w, sol.assignment, w_a, w_d), abs=1e-12)


class TestTopK:
    def test_ambiguous_pair_top_two(self):
        src, tgt = ambiguous_pair()
        sols = top_k(src, tgt, make_cost_model("l2"), 2)
        assert [tuple(s.assignment.mother_vector()) for s in sols] == [(0, 0, 1), (0, 1, 1)]
        np.testing.assert_allclose([s.log_score for s in sols], [-2.62, -3.42], atol=1e-12)
        assert [s.rank for s in sols] == [1, 2]

    def test_ambiguous_pair_third_and_fourth(self):
        src, tgt = ambiguous_pair()
        sols = top_k(src, tgt, make_cost_model("l2"), 4)
        assert [tuple(s.assignment.mother_vector()) for s in sols[2:]] == [(0, -1, 1), (-1, 0, 1)]
        np.testing.assert_allclose([s.log_score for s in sols[2:]], [-11.0, -12.12], atol=1e-12)

    def test_full_enumeration_two_by_two(self):
        w = np.array([[0.5, 2.5], [2.0, 1.0]])
        sols = top_k_encoded(encode_costs(w, 2.0, 2.0), 9)
        ref = sorted((s for _, s in all_scores(w, 2.0, 2.0)), reverse=True)
        assert len(sols) == 9
        np.testing.assert_allclose([s.log_score for s in sols], ref, atol=1e-12)

    def test_k_larger_than_space(self):
        src, tgt = frames([[0, 0]], [[1, 0]])
        sols = top_k(src, tgt, make_cost_model("l2"), 50)
        assert len(sols) == 2

    def test_first_equals_map(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            w = rng.uniform(0, 8, (3, 4))
            enc = encode_costs(w, 4.0, 4.0)
            assert top_k_encoded(enc, 3)[0].log_score == solve_encoded(enc).log_score

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            top_k_encoded(encode_costs(np.zeros((1, 1)), 1, 1), 0)

    def test_ties_broken_by_edges(self):
        # two identical mothers: swapping them gives equal scores
        w = np.array([[1.0, 1.0], [1.0, 1.0]])
        sols = top_k_encoded(encode_costs(w, 5.0, 5.0), 9)
        keys = [(-s.log_score, s.assignment.sort_key()) for s in sols]
        assert keys == sorted(keys)

    def test_deterministic(self):
        src, tgt = ambiguous_pair()
        cm = make_cost_model("l2", appear_cost=3, disappear_cost=3)
        a = [s.assignment.canonical() for s in top_k(src, tgt, cm, 10)]
        b = [s.assignment.canonical() for s in top_k(src, tgt, cm, 10)]
        assert a == b

    @settings(max_examples=60, deadline=None)
    @given(cost_matrices, event_cost, event_cost, st.integers(1, 12))
    def test_prefix_of_sorted_exhaustive(self, w, w_a, w_d, k):
        scores = sorted((s for _, s in all_scores(w, w_a, w_d)), reverse=True)
        sols = top_k_encoded(encode_costs(w, w_a, w_d), k)
        assert len(sols) == min(k, len(scores))
        np.testing.assert_allclose([s.log_score for s in sols], scores[:len(sols)], atol=1e-9)
        assert len({s.assignment for s in sols}) == len(sols)
        assert all(a.log_score >= b.log_score for a, b in zip(sols, sols[1:]))


def test_encoding_score_consistency():
    src, tgt = ambiguous_pair()
    cm = make_cost_model("l2")
    enc = encode_lap(src, tgt, cm)
    a = Assignment.from_mother_vector([0, 0, 1], 2)
    assert enc.score(a) == pytest.approx(-2.62)
