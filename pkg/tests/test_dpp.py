import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_subsets, brute_map, brute_partition, plain_det, random_psd
from sumtransfer import dpp
from sumtransfer.errors import NumericalError, ValidationError


def test_subset_log_prob_diag_examples():
    L = np.diag([2.0, 2.0])
    assert dpp.subset_log_prob(L, [0]) == pytest.approx(math.log(2 / 9))
    assert dpp.subset_log_prob(L, []) == pytest.approx(math.log(1 / 9))


def test_duplicate_rows_give_zero_probability():
    v = np.array([[1.0, 0.5, 0.2], [0.3, 1.0, 0.1]])
    L = v.T @ v  # 3x3
    L = np.block([[L, L[:, :1]], [L[:1, :], L[:1, :1]]])  # item 3 duplicates item 0
    assert dpp.subset_log_prob(L, [0, 3]) == -math.inf
    assert dpp.subset_log_prob(L, [0, 1]) > -math.inf


def test_subset_log_prob_errors():
    with pytest.raises(ValidationError):
        dpp.subset_log_prob(np.eye(2), [2])
    with pytest.raises(ValidationError):
        dpp.subset_log_prob(np.array([[1.0, 2.0], [2.0, 1.0]]), [0])
    with pytest.raises(ValidationError):
        dpp.subset_log_prob(np.array([[1.0, 0.5], [0.0, 1.0]]), [0])
    with pytest.raises(ValidationError):
        dpp.subset_log_prob(np.eye(3), [1, 0])


def test_log_partition_examples():
    assert dpp.log_partition(np.zeros((3, 3))) == 0.0
    assert dpp.log_partition(np.diag([2.0, 2.0])) == pytest.approx(math.log(9))


def test_log_partition_large_no_overflow():
    L = 2.0 * np.eye(1000)
    v = dpp.log_partition(L)
    assert v == pytest.approx(1000 * math.log(3.0))  # det(L + I) = 3^1000 overflows


@pytest.mark.parametrize("seed", range(10))
def test_log_partition_matches_subset_sum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    L = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
    assert math.exp(dpp.log_partition(L)) == pytest.approx(brute_partition(L), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_probabilities_bounded(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    L = random_psd(rng, n, rank=int(rng.integers(1, n + 1)))
    total = 0.0
    for y in all_subsets(n):
        p = math.exp(dpp.subset_log_prob(L, y))
        assert -1e-12 <= p <= 1 + 1e-9
        total += p
    assert total == pytest.approx(1.0, rel=1e-8)


def test_map_exact_examples():
    assert dpp.map_exact(np.diag([2.0, 0.5])) == (0,)
    ind = np.array([0, 1, 1, 0, 1.0])
    assert dpp.map_exact(2.0 * np.diag(ind)) == (1, 2, 4)
    assert dpp.map_exact(np.diag(ind)) == ()


def test_map_exact_guard():
    with pytest.raises(ValidationError):
        dpp.map_exact(np.eye(21))


@pytest.mark.parametrize("seed", range(15))
def test_map_exact_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    L = random_psd(rng, n, rank=int(rng.integers(1, n + 1)), scale=rng.uniform(0.3, 3))
    got = dpp.map_exact(L)
    want = brute_map(L)
    assert plain_det(L, got) == pytest.approx(plain_det(L, want), rel=1e-8, abs=1e-12)


def test_map_exact_never_picks_duplicates(rng):
    for _ in range(20):
        n = 6
        B = rng.standard_normal((n, 3))
        B[4] = B[1]
        L = B @ B.T * 3
        y = dpp.map_exact(L)
        assert not {1, 4} <= set(y)


def test_map_greedy_examples():
    assert dpp.map_greedy(np.diag([3.0, 2.0, 0.5])) == (0, 1)
    assert dpp.map_greedy(np.eye(4)) == ()
    assert dpp.map_greedy(np.zeros((3, 3))) == ()


def test_map_greedy_tie_breaks_by_smallest_index():
    assert dpp.map_greedy(np.diag([2.0, 2.0, 2.0])) == (0, 1, 2)
    L = np.array([[2.0, 2.0], [2.0, 2.0]])  # identical items: only one can be chosen
    assert dpp.map_greedy(L) == (0,)


def test_map_greedy_dominated_by_exact():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        L = random_psd(rng, n, rank=int(rng.integers(1, n + 1)), scale=rng.uniform(0.2, 2.0))
        g = dpp.map_greedy(L)
        e = dpp.map_exact(L)
        assert dpp.subset_log_prob(L, g) <= dpp.subset_log_prob(L, e) + 1e-9
        assert plain_det(L, g) >= -1e-12


def test_greedy_matches_naive_determinant_ascent():
    """Incremental-Cholesky gains agree with recomputing det(L_{y+i}) from scratch."""
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        L = random_psd(rng, n, scale=rng.uniform(0.5, 2))
        y, cur = [], 1.0
        while True:
            gains = [(plain_det(L, sorted(y + [i])), -i) for i in range(n) if i not in y]
            if not gains:
                break
            best, neg_i = max(gains)
            if best <= cur * (1 + 1e-10):
                break
            y.append(-neg_i)
            cur = best
        assert dpp.map_greedy(L) == tuple(sorted(y))


def test_condition_on_identity_and_diagonal():
    L = np.array([[2.0, 0.3], [0.3, 1.5]])
    np.testing.assert_array_equal(dpp.condition_on(L, []), L)
    D = np.diag([2.0, 3.0])
    np.testing.assert_allclose(dpp.condition_on(D, [0]), [[3.0]])


def test_condition_on_matches_literal_inverse_formula(rng):
    n = 6
    L = random_psd(rng, n)
    f = [1, 4]
    rest = [i for i in range(n) if i not in f]
    Ic = np.diag([0.0 if i in f else 1.0 for i in range(n)])
    lit = np.linalg.inv(np.linalg.inv(L + Ic)[np.ix_(rest, rest)]) - np.eye(len(rest))
    np.testing.assert_allclose(dpp.condition_on(L, f), lit, atol=1e-9)


def test_condition_on_zero_probability_forced_set():
    L = np.diag([0.0, 2.0])
    with pytest.raises(NumericalError):
        dpp.condition_on(L, [0])


@pytest.mark.parametrize("seed", range(10))
def test_conditioning_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    L = random_psd(rng, n, scale=rng.uniform(0.5, 2))
    k = int(rng.integers(1, n))
    forced = sorted(int(i) for i in rng.choice(n, k, replace=False))
    rest = [i for i in range(n) if i not in forced]
    Lc = dpp.condition_on(L, forced)
    supersets = [y for y in all_subsets(n) if set(forced) <= set(y)]
    z = sum(plain_det(L, y) for y in supersets)
    for y in supersets:
        local = [rest.index(i) for i in y if i not in forced]
        assert math.exp(dpp.subset_log_prob(Lc, local)) == pytest.approx(plain_det(L, y) / z, rel=1e-7, abs=1e-12)
    # constrained MAP
    local = dpp.map_exact(Lc)
    got = tuple(sorted(forced + [rest[i] for i in local]))
    cands = sorted(supersets, key=lambda y: (len(y), y))
    assert got == brute_map(L, cands)


def test_kernel_validation_accepts_roundoff_asymmetry(rng):
    L = random_psd(rng, 5)
    L[0, 1] += 1e-13
    dpp.as_kernel(L)


def test_subset_validation():
    assert dpp.as_subset([0, 2], 3) == (0, 2)
    for bad in ([0, 0], [2, 1], [-1], [3]):
        with pytest.raises(ValidationError):
            dpp.as_subset(bad, 3)


def test_exact_enumeration_all_sizes_chunked():
    # 2^14 subsets crosses the chunk boundary for mid cardinalities
    n = 14
    d = np.full(n, 0.9)
    d[[2, 5, 11]] = 3.0
    assert dpp.map_exact(np.diag(d)) == (2, 5, 11)
    assert len(list(combinations(range(n), 7))) > 0
