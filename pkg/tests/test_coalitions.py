import itertools

import numpy as np
import pytest

from coalitionflow import (
    AllocationBounds,
    ExcessState,
    augmented_matrix,
    core_membership,
    core_violation,
    enumerate_coalitions,
    excess_update,
    incidence_matrix,
    is_balanced,
)

U_NOM = np.array([2.5, 3, 4.5, 1.5, 1, 1.5, 1.5, 2, 1.5])
A_NOM = U_NOM[:3]
V_NOM = np.array([1, 2, 3, 4, 5, 6, 10.0])


def brute_force_order(n):
    """Independent enumeration: every nonempty subset, size then lexicographic."""
    subsets = [c for k in range(1, n + 1) for c in itertools.combinations(range(1, n + 1), k)]
    return sorted(subsets, key=lambda c: (len(c), c))


class TestEnumerate:
    def test_single_player(self):
        idx = enumerate_coalitions(1)
        assert idx.m == 1
        assert idx.members(0) == (1,)

    def test_three_players_order(self):
        idx = enumerate_coalitions(3)
        expected = [(1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)]
        assert [idx.members(j) for j in range(idx.m)] == expected

    def test_four_players_against_brute_force(self):
        idx = enumerate_coalitions(4)
        assert idx.m == 15
        assert [idx.members(j) for j in range(idx.m)] == brute_force_order(4)
        assert idx.members(idx.m - 1) == (1, 2, 3, 4)

    @pytest.mark.parametrize("n", [0, -1, 13])
    def test_domain_errors(self, n):
        with pytest.raises(ValueError):
            enumerate_coalitions(n)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_invariants(self, n):
        idx = enumerate_coalitions(n)
        assert len(set(idx.masks)) == idx.m == 2**n - 1
        assert idx.masks[-1] == (1 << n) - 1
        assert [idx.members(j) for j in range(idx.m)] == brute_force_order(n)


class TestIncidence:
    def test_single_player(self):
        assert incidence_matrix(enumerate_coalitions(1)).tolist() == [[1.0]]

    def test_membership_row(self):
        inc = incidence_matrix(enumerate_coalitions(3))
        assert inc[3].tolist() == [1.0, 1.0, 0.0]  # coalition {1,2}

    def test_nominal_product(self):
        inc = incidence_matrix(enumerate_coalitions(3))
        np.testing.assert_allclose(inc @ A_NOM, [2.5, 3, 4.5, 5.5, 7, 7.5, 10])

    @pytest.mark.parametrize("n", range(1, 7))
    def test_row_and_column_sums(self, n):
        idx = enumerate_coalitions(n)
        inc = incidence_matrix(idx)
        sizes = [len(idx.members(j)) for j in range(idx.m)]
        np.testing.assert_array_equal(inc.sum(axis=1), sizes)
        # each player sits in half of all subsets built over the others
        np.testing.assert_array_equal(inc.sum(axis=0), [2 ** (n - 1)] * n)


class TestAugmented:
    def test_single_player_no_surplus(self):
        B = augmented_matrix(incidence_matrix(enumerate_coalitions(1)))
        assert B.shape == (1, 1)
        assert B[0, 0] == 1.0

    def test_shape_and_grand_row(self):
        B = augmented_matrix(incidence_matrix(enumerate_coalitions(3)))
        assert B.shape == (7, 9)
        assert B[-1].tolist() == [1, 1, 1, 0, 0, 0, 0, 0, 0]

    def test_nominal_identity(self):
        B = augmented_matrix(incidence_matrix(enumerate_coalitions(3)))
        np.testing.assert_allclose(B @ U_NOM, V_NOM, atol=1e-12)

    def test_block_structure_exact(self):
        for n in range(1, 7):
            inc = incidence_matrix(enumerate_coalitions(n))
            B = augmented_matrix(inc)
            m = inc.shape[0]
            np.testing.assert_array_equal(B[:, :n], inc)
            np.testing.assert_array_equal(B[: m - 1, n:], -np.eye(m - 1))
            np.testing.assert_array_equal(B[m - 1, n:], np.zeros(m - 1))

    def test_structural_identity_randomized(self):
        rng = np.random.default_rng(514)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            idx = enumerate_coalitions(n)
            inc = incidence_matrix(idx)
            B = augmented_matrix(inc)
            a = rng.normal(size=n) * 10
            s = np.abs(rng.normal(size=idx.m - 1)) * 10
            lhs = B @ np.concatenate([a, s])
            rhs = inc @ a - np.concatenate([s, [0.0]])
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestExcess:
    inc3 = incidence_matrix(enumerate_coalitions(3))

    def test_balanced_instant_keeps_excess(self):
        state = ExcessState.initial(np.zeros(7))
        v = self.inc3 @ A_NOM
        out = excess_update(state, self.inc3, A_NOM, v, dt=0.1)
        np.testing.assert_array_equal(out.epsilon, 0.0)

    def test_constant_inputs_linear_growth(self):
        state = ExcessState.initial(np.zeros(7))
        v = np.ones(7)
        for _ in range(40):
            state = excess_update(state, self.inc3, A_NOM, v, dt=0.25)
        np.testing.assert_allclose(state.epsilon, 10.0 * (self.inc3 @ A_NOM - v), rtol=1e-12)

    def test_additivity_of_piecewise_constant_integration(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            pieces = [(rng.normal(size=3), rng.normal(size=7), rng.uniform(0.01, 1.0))
                      for _ in range(int(rng.integers(1, 5)))]
            stepped = ExcessState.initial(np.zeros(7))
            for a, v, dt in pieces:
                k = int(rng.integers(1, 4))
                for _ in range(k):
                    stepped = excess_update(stepped, self.inc3, a, v, dt / k)
            single = sum(dt * (self.inc3 @ a - v) for a, v, dt in pieces)
            np.testing.assert_allclose(stepped.epsilon, single, atol=1e-12)

    def test_rejects_bad_dt_and_nonfinite(self):
        state = ExcessState.initial(np.zeros(7))
        with pytest.raises(ValueError):
            excess_update(state, self.inc3, A_NOM, np.ones(7), dt=0.0)
        with pytest.raises(ValueError):
            excess_update(state, self.inc3, A_NOM, np.full(7, np.nan), dt=0.1)


class TestCorePredicates:
    inc3 = incidence_matrix(enumerate_coalitions(3))
    inc2 = incidence_matrix(enumerate_coalitions(2))

    def test_nominal_allocation_in_core(self):
        assert core_membership(V_NOM, A_NOM, 1e-9, self.inc3)

    def test_zero_game(self):
        assert core_membership(np.zeros(7), np.zeros(3), 0.0, self.inc3)

    def test_greedy_allocation_violates(self):
        assert not core_membership(V_NOM, np.array([10.0, 0, 0]), 1e-9, self.inc3)

    def test_membership_monotone_in_values(self):
        rng = np.random.default_rng(7)
        hits = 0
        for _ in range(1000):
            a = rng.uniform(0, 3, size=3)
            v = self.inc3 @ a - rng.uniform(0, 1, size=7)
            v[-1] = a.sum()
            if not core_membership(v, a, 0.0, self.inc3):
                continue
            hits += 1
            v2 = v.copy()
            j = int(rng.integers(0, 6))
            v2[j] -= rng.uniform(0, 2)
            assert core_membership(v2, a, 0.0, self.inc3)
        assert hits > 800

    def test_violation_examples(self):
        assert core_violation(V_NOM, A_NOM, self.inc3) == 0.0
        assert core_violation(np.zeros(7), np.zeros(3), self.inc3) == 0.0
        assert core_violation(np.array([0, 0, 2.0]), np.zeros(2), self.inc2) == 2.0

    def test_violation_zero_iff_membership(self):
        rng = np.random.default_rng(21)
        for _ in range(1000):
            a = rng.normal(size=3)
            v = rng.normal(size=7)
            member = core_membership(v, a, 0.0, self.inc3)
            viol = core_violation(v, a, self.inc3)
            assert member == (viol == 0.0)


def balanced_by_vertex_enumeration(v, inc, tol=1e-9):
    """Check feasibility of {sum(a) = v_N, inc @ a >= v} by enumerating vertices."""
    m, n = inc.shape
    if n == 1:
        return True
    eq_row = np.ones((1, n))
    for rows in itertools.combinations(range(m), n - 1):
        A = np.vstack([eq_row, inc[list(rows)]])
        b = np.concatenate([[v[-1]], v[list(rows)]])
        try:
            a = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if abs(a.sum() - v[-1]) <= tol and np.all(inc @ a >= v - tol):
            return True
    return False


class TestBalancedness:
    inc3 = incidence_matrix(enumerate_coalitions(3))
    inc2 = incidence_matrix(enumerate_coalitions(2))

    def test_reference_game_balanced(self):
        assert is_balanced(V_NOM, self.inc3)

    def test_additive_game_balanced(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            w = rng.normal(size=3)
            v = self.inc3 @ w
            assert is_balanced(v, self.inc3)

    def test_two_player_infeasible(self):
        assert not is_balanced(np.array([1.0, 1.0, 1.0]), self.inc2)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_vertex_enumeration(self, n):
        inc = incidence_matrix(enumerate_coalitions(n))
        rng = np.random.default_rng(100 + n)
        disagreements = 0
        for _ in range(1000):
            v = rng.normal(scale=2.0, size=inc.shape[0])
            if is_balanced(v, inc) != balanced_by_vertex_enumeration(v, inc):
                disagreements += 1
        assert disagreements == 0


class TestAllocationBounds:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            AllocationBounds(a_min=np.array([1.0]), a_max=np.array([0.0]))
