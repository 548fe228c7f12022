"""Agreement metrics and the moment loading estimator.

Covers:
    - adjusted Rand index: identity, relabeling invariance, an exact
      rational hand value, agreement with an independent pair-counting
      oracle, symmetry, input validation
    - soft confusion: counting oracle, uniform assignments, a hand value,
      shape validation
    - minimum soft misclassification: relabeled one-hot, uniform rows,
      brute-force matching oracle, refusal above K = 10
    - moment loadings: hand value, equivalence to the covariance row-mean
      path, degenerate width
"""

from fractions import Fraction
from itertools import combinations, permutations

import numpy as np
import pytest

from hbcm.metrics import (
    adjusted_rand_index,
    min_misclassification,
    moment_lambda,
    soft_confusion,
)
from hbcm.model import ValidationError, membership_matrix


def _ari_oracle(a, b):
    # pair-counting definition over all item pairs, exact rationals
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    n11 = n10 = n01 = 0
    for i, j in combinations(range(a.size), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        n11 += sa and sb
        n10 += sa and not sb
        n01 += sb and not sa
    pairs = a.size * (a.size - 1) // 2
    sum_a, sum_b = n11 + n10, n11 + n01
    expected = Fraction(sum_a * sum_b, pairs)
    maximum = Fraction(sum_a + sum_b, 2)
    if maximum == expected:
        return 1.0
    return float((n11 - expected) / (maximum - expected))


# -- adjusted Rand index ------------------------------------------------------

def test_ari_identity_and_relabeling():
    labels = np.array([1, 1, 2, 2, 3, 3, 3])
    assert adjusted_rand_index(labels, labels) == 1.0
    relabeled = np.array([5, 5, 9, 9, 2, 2, 2])
    assert adjusted_rand_index(labels, relabeled) == 1.0


def test_ari_exact_hand_value():
    # contingency [[2,1],[1,2]]: index = (2 - 24/15) / (4 - 24/15) = 8/33... no:
    # sum_cells = 2, sum_a = sum_b = 1+1+... compute: a=[1,1,1,2,2,2] vs
    # b=[1,1,2,1,2,2] gives cells (2,1;1,2), sum_cells=2, sum_a=sum_b=6,
    # total=15, expected=12/5, max=6 -> (2-12/5)/(6-12/5)=-1/9
    a = [1, 1, 1, 2, 2, 2]
    b = [1, 1, 2, 1, 2, 2]
    got = adjusted_rand_index(a, b)
    assert got == float(Fraction(-1, 9))
    assert got == _ari_oracle(a, b)


def test_ari_matches_pair_counting_oracle_exactly():
    rng = np.random.default_rng(91)
    for _ in range(200):
        p = int(rng.integers(2, 30))
        ka = int(rng.integers(1, 5))
        kb = int(rng.integers(1, 5))
        a = rng.integers(1, ka + 1, size=p)
        b = rng.integers(1, kb + 1, size=p)
        assert adjusted_rand_index(a, b) == _ari_oracle(a, b)


def test_ari_is_symmetric():
    rng = np.random.default_rng(92)
    for _ in range(25):
        a = rng.integers(1, 4, size=40)
        b = rng.integers(1, 5, size=40)
        assert adjusted_rand_index(a, b) == adjusted_rand_index(b, a)


def test_ari_independent_labelings_score_near_zero():
    rng = np.random.default_rng(93)
    scores = [adjusted_rand_index(rng.integers(1, 4, size=2000),
                                  rng.integers(1, 4, size=2000))
              for _ in range(10)]
    assert abs(np.mean(scores)) < 0.01


def test_ari_input_validation():
    with pytest.raises(ValidationError, match="differ in length"):
        adjusted_rand_index([1, 2, 3], [1, 2])
    with pytest.raises(ValidationError, match="at least 2"):
        adjusted_rand_index([1], [1])


# -- soft confusion -----------------------------------------------------------

def test_soft_confusion_counts_one_hot_overlaps():
    rng = np.random.default_rng(94)
    p, k = 60, 3
    a = rng.integers(1, k + 1, size=p)
    b = rng.integers(1, k + 1, size=p)
    r = soft_confusion(membership_matrix(a, k), membership_matrix(b, k)).r
    counts = np.zeros((k, k))
    for la, lb in zip(a, b):
        counts[la - 1, lb - 1] += 1
    np.testing.assert_allclose(r, counts / p, rtol=0, atol=1e-15)
    assert abs(r.sum() - 1.0) < 1e-12


def test_soft_confusion_uniform_rows():
    p, k = 32, 4
    q = np.full((p, k), 1.0 / k)
    truth = np.tile(np.arange(1, k + 1), p // k)
    r = soft_confusion(q, membership_matrix(truth, k)).r
    np.testing.assert_allclose(r, np.full((k, k), 1.0 / (k * k)), atol=1e-15)
    assert abs(np.trace(r) - 1.0 / k) < 1e-12


def test_soft_confusion_hand_value():
    # hand sum of R = q^T q_tilde / P for P = 2
    q = np.array([[0.7, 0.3], [0.2, 0.8]])
    q_tilde = np.eye(2)
    r = soft_confusion(q, q_tilde).r
    np.testing.assert_allclose(r, [[0.35, 0.10], [0.15, 0.40]], atol=1e-15)


def test_soft_confusion_shape_validation():
    with pytest.raises(ValidationError, match="shapes do not align"):
        soft_confusion(np.ones((4, 2)), np.ones((5, 2)))
    with pytest.raises(ValidationError, match="shapes do not align"):
        soft_confusion(np.ones(4), np.ones((4, 2)))


# -- minimum misclassification ------------------------------------------------

def test_min_misclassification_zero_for_relabeled_truth():
    rng = np.random.default_rng(95)
    truth = rng.integers(1, 4, size=50)
    relabeled = np.array([2, 3, 1])[truth - 1]  # 1->2, 2->3, 3->1
    q = membership_matrix(relabeled, 3)
    assert min_misclassification(q, truth) == 0.0


def test_min_misclassification_uniform_rows():
    for k in (2, 3, 5):
        p = 12 * k
        truth = np.tile(np.arange(1, k + 1), p // k)
        q = np.full((p, k), 1.0 / k)
        assert abs(min_misclassification(q, truth) - (1.0 - 1.0 / k)) < 1e-12


def test_min_misclassification_matches_brute_force():
    rng = np.random.default_rng(96)
    for _ in range(20):
        k = int(rng.integers(2, 6))
        p = int(rng.integers(k, 40))
        q = rng.dirichlet(np.ones(k), size=p)
        truth = rng.integers(1, k + 1, size=p)
        best = min(
            1.0 - sum(q[j, perm[truth[j] - 1]] for j in range(p)) / p
            for perm in permutations(range(k)))
        assert abs(min_misclassification(q, truth) - best) < 1e-12


def test_min_misclassification_refuses_large_k():
    q = np.full((22, 11), 1.0 / 11)
    truth = np.tile(np.arange(1, 12), 2)
    with pytest.raises(ValidationError, match="refused for K = 11 > 10"):
        min_misclassification(q, truth)


def test_min_misclassification_input_validation():
    with pytest.raises(ValidationError, match="P x K"):
        min_misclassification(np.ones(5), np.ones(5, dtype=int))
    with pytest.raises(ValidationError, match="one label per row"):
        min_misclassification(np.ones((5, 2)) / 2, np.array([1, 2]))


# -- moment loadings ----------------------------------------------------------

def test_moment_lambda_hand_value():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    # X^T X = [[10,14],[14,20]]; row means / N: (24/4, 34/4)
    np.testing.assert_allclose(moment_lambda(x), [6.0, 8.5], atol=0)


def test_moment_lambda_matches_second_moment_row_means():
    rng = np.random.default_rng(97)
    x = rng.normal(size=(40, 15))
    s = x.T @ x / 40.0
    np.testing.assert_allclose(moment_lambda(x), s.mean(axis=1),
                               rtol=0, atol=1e-12)


def test_moment_lambda_single_column():
    x = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_allclose(moment_lambda(x), [14.0 / 3.0], atol=1e-15)
