import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from regimegraph.selection import (SelectionScore, adjusted_rand_index, align_by_location,
                                   align_states, degrees_of_freedom, edge_recovery,
                                   random_sparse_precision, roc_auc, score, select)


class TestDegreesOfFreedom:
    def test_diagonal(self):
        assert degrees_of_freedom(np.eye(5)) == 10

    def test_dense(self):
        assert degrees_of_freedom(np.ones((4, 4)) + np.eye(4)) == 14

    def test_three_pairs(self):
        theta = np.eye(10)
        for i, j in [(0, 3), (2, 7), (5, 9)]:
            theta[i, j] = theta[j, i] = 0.2
        assert degrees_of_freedom(theta) == 23
        assert degrees_of_freedom(theta, mode="strict") == 13

    def test_errors(self):
        with pytest.raises(ValueError):
            degrees_of_freedom(np.ones((2, 3)))
        with pytest.raises(ValueError):
            degrees_of_freedom(np.eye(2), mode="other")


class TestScore:
    def test_hand_values(self):
        s = score(-100.0, 100, 2, (5, 5), (0.5, 0.5))
        assert s.bic == 100 + 12 * math.log(10)
        assert s.mmdl == 100 + 2 * math.log(10) + 5 * math.log(50)
        assert s.df_total == 10

    def test_single_state_equal(self):
        s = score(-1234.5, 1000, 1, (13,), (1.0,))
        assert s.bic == s.mmdl

    @given(st.floats(-1e5, 1e5), st.integers(2, 10**5), st.integers(1, 5), st.integers(0, 10**6))
    def test_mmdl_below_bic(self, ll, T, K, seed):
        rng = np.random.default_rng(seed)
        nu = rng.dirichlet(np.ones(K)) + 1e-9
        nu = nu / nu.sum()
        df = rng.integers(2, 40, K)
        s = score(ll, T, K, df, np.minimum(nu, 1.0))
        assert s.mmdl <= s.bic + 1e-9 * abs(s.bic)

    @given(st.integers(2, 5000), st.integers(1, 4), st.integers(0, 3), st.integers(0, 10**6))
    def test_increasing_in_df(self, T, K, k, seed):
        k = k % K
        rng = np.random.default_rng(seed)
        df = list(rng.integers(2, 20, K))
        nu = rng.dirichlet(np.ones(K)) * 0.9 + 0.1 / K
        base = score(-50.0, T, K, df, nu)
        df[k] += 1
        more = score(-50.0, T, K, df, nu)
        assert more.bic > base.bic
        if T * nu[k] > 1:
            assert more.mmdl > base.mmdl

    @pytest.mark.parametrize("kw", [dict(T=1), dict(df=(1,)), dict(nu=(0.0, 1.0))])
    def test_errors(self, kw):
        args = dict(loglik=0.0, T=10, K=2, df=(3, 3), nu=(0.5, 0.5))
        args.update(kw)
        with pytest.raises(ValueError):
            score(**args)


def _s(K, rho, val):
    return SelectionScore(K, rho, 0.0, (1,) * K, val, val)


class TestSelect:
    def test_single(self):
        only = _s(2, 0.1, 5.0)
        assert select([only]) is only

    def test_tie_breaks(self):
        grid = [_s(3, 0.1, 1.0), _s(2, 0.2, 1.0), _s(2, 0.1, 1.0)]
        best = select(grid, "mmdl")
        assert (best.K, best.rho) == (2, 0.1)

    def test_strict_minimum(self):
        rng = np.random.default_rng(0)
        grid = [_s(K, r, float(rng.normal())) for K in (1, 2, 3) for r in (0.01, 0.1, 0.5)]
        best = select(grid, "bic")
        assert best.bic == min(g.bic for g in grid)

    def test_errors(self):
        with pytest.raises(ValueError):
            select([])
        with pytest.raises(ValueError):
            select([_s(1, 0.0, 0.0)], "aic")


class TestAri:
    def test_identical_and_relabelled(self):
        a = np.array([0, 0, 1, 1, 2, 2, 2])
        assert adjusted_rand_index(a, a) == 1.0
        assert adjusted_rand_index(a, (a + 1) % 3) == pytest.approx(1.0)

    def test_known_value(self):
        # 2x2 contingency [[2, 1], [0, 2]]: sum C(n_ij,2) = 2, rows 3+1, cols 1+3
        a = [0, 0, 0, 1, 1]
        b = [0, 0, 1, 1, 1]
        expected = (2 - 4 * 4 / 10) / (0.5 * 8 - 4 * 4 / 10)
        assert adjusted_rand_index(a, b) == pytest.approx(expected, rel=1e-14)

    def test_null(self):
        rng = np.random.default_rng(0)
        a, b = rng.integers(0, 3, 10**4), rng.integers(0, 3, 10**4)
        assert abs(adjusted_rand_index(a, b)) < 0.02

    @given(st.lists(st.integers(0, 3), min_size=2, max_size=40), st.integers(0, 10**6))
    def test_symmetry_and_permutation(self, labels, seed):
        rng = np.random.default_rng(seed)
        a = np.array(labels)
        b = rng.integers(0, 3, a.size)
        perm = rng.permutation(4)
        ab = adjusted_rand_index(a, b)
        assert ab == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)
        assert ab == pytest.approx(adjusted_rand_index(perm[a], b), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            adjusted_rand_index([0, 1], [0, 1, 1])


class TestAlignment:
    def test_align_states(self):
        true = np.array([0, 0, 1, 1, 2, 2])
        est = np.array([2, 2, 0, 0, 1, 1])
        perm = align_states(true, est, 3)
        np.testing.assert_array_equal(perm, [2, 0, 1])

    def test_align_by_location(self):
        perm = align_by_location([[5, 5], [-5, -5]], [[-4.9, -5.2], [5.1, 4.8]])
        np.testing.assert_array_equal(perm, [1, 0])


class TestEdgeRecovery:
    def test_perfect_and_empty(self):
        theta = random_sparse_precision(10, 0)
        r = edge_recovery(theta, theta)
        assert (r.tpr, r.fpr) == (1.0, 0.0)
        r = edge_recovery(theta, np.diag(np.diag(theta)))
        assert (r.tpr, r.fpr) == (0.0, 0.0)

    @given(st.integers(0, 10**6))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        a = random_sparse_precision(10, rng)
        b = random_sparse_precision(10, rng)
        tp = fp = fn = tn = 0
        for i in range(10):
            for j in range(i + 1, 10):
                t, e = a[i, j] != 0, b[i, j] != 0
                tp += t and e
                fn += t and not e
                fp += e and not t
                tn += not t and not e
        r = edge_recovery(a, b)
        assert r.tp == tp and r.fp == fp
        if tp + fn:
            assert r.tpr == pytest.approx(tp / (tp + fn))
            assert r.tpr + fn / (tp + fn) == pytest.approx(1.0)
        if fp + tn:
            assert r.fpr == pytest.approx(fp / (fp + tn))
            assert r.fpr + tn / (fp + tn) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            edge_recovery(np.eye(3), np.eye(4))


class TestRandomSparsePrecision:
    def test_min_eigenvalue_and_support(self):
        for seed in range(20):
            theta = random_sparse_precision(10, seed)
            assert np.linalg.eigvalsh(theta)[0] == pytest.approx(0.6, abs=1e-8)
            np.testing.assert_array_equal(theta, theta.T)
            np.linalg.cholesky(theta)
            off = theta - np.diag(np.diag(theta))
            assert set(np.unique(off)) <= {-1.0, 0.0, 1.0}
            # diagonal is 1 + row count, shifted by one common amount
            shift = np.diag(theta) - 1 - np.count_nonzero(off, axis=1)
            assert np.ptp(shift) < 1e-12

    def test_density(self):
        rows, cols = np.tril_indices(10, -1)
        frac = np.mean([np.count_nonzero(random_sparse_precision(10, s)[rows, cols]) / rows.size
                        for s in range(200)])
        assert frac == pytest.approx(0.30, abs=0.03)

    def test_deterministic(self):
        np.testing.assert_array_equal(random_sparse_precision(8, 3), random_sparse_precision(8, 3))

    def test_small_d(self):
        with pytest.raises(ValueError):
            random_sparse_precision(1)


class TestRocAuc:
    def test_diagonal_and_perfect(self):
        assert roc_auc([0.5], [0.5]) == pytest.approx(0.5)
        assert roc_auc([0.0], [1.0]) == pytest.approx(1.0)

    def test_unsorted(self):
        assert roc_auc([0.5, 0.1], [0.9, 0.6]) == pytest.approx(roc_auc([0.1, 0.5], [0.6, 0.9]))
