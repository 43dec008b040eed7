import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hpalign.metrics import cosine_similarity, evaluate, plan_entropy, top_k, top_k_accuracy

plans = arrays(np.float64, (4, 4), elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 0)


def perm_matrix(perm):
    C = len(perm)
    P = np.zeros((C, C))
    P[np.arange(C), perm] = 1.0
    return P


def test_accuracy_scaled_permutation_is_one():
    P = perm_matrix([2, 0, 3, 1])
    assert top_k_accuracy(P, P / 4, 1) == 1.0


def test_accuracy_all_misses():
    assert top_k_accuracy(np.eye(2), np.array([[0.1, 0.4], [0.3, 0.2]]), 1) == 0.0


def test_accuracy_k_equals_columns():
    P = perm_matrix([1, 0, 2])
    rng = np.random.default_rng(0)
    assert top_k_accuracy(P, rng.uniform(size=(3, 3)), 3) == 1.0
    T = np.zeros((3, 4))
    T[0, 1] = T[2, 3] = 1.0
    assert top_k_accuracy(T, rng.uniform(size=(3, 4)), 4) == pytest.approx(2 / 3)


def test_accuracy_ties_go_to_lower_column():
    T_hat = np.full((2, 3), 0.5)
    np.testing.assert_array_equal(top_k(T_hat, 1), [[1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(top_k(T_hat, 2), [[1, 1, 0], [1, 1, 0]])
    assert top_k_accuracy(np.eye(2, 3), T_hat, 1) == 0.5


def test_accuracy_errors():
    with pytest.raises(ValueError, match="shape"):
        top_k_accuracy(np.eye(2), np.eye(3), 1)
    with pytest.raises(ValueError):
        top_k_accuracy(np.eye(2), np.eye(2), 3)
    with pytest.raises(ValueError):
        top_k_accuracy(np.eye(2), np.eye(2), 0)


@given(plans, st.floats(1e-3, 1e3))
def test_accuracy_and_similarity_scale_invariant(T_hat, c):
    P = perm_matrix([3, 1, 0, 2])
    assert top_k_accuracy(P, c * T_hat, 2) == top_k_accuracy(P, T_hat, 2)
    assert cosine_similarity(P, c * T_hat) == pytest.approx(cosine_similarity(P, T_hat), rel=1e-12)


@given(plans)
def test_accuracy_monotone_in_k(T_hat):
    P = perm_matrix([1, 2, 3, 0])
    accs = [top_k_accuracy(P, T_hat, k) for k in range(1, 5)]
    assert all(a <= b for a, b in zip(accs, accs[1:]))
    assert accs[-1] == 1.0


def test_similarity_examples():
    P = perm_matrix([1, 0, 2])
    assert cosine_similarity(P, 3.7 * P) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity(np.eye(2), np.array([[0, 1.0], [1.0, 0]])) == 0.0
    assert cosine_similarity(np.eye(2), np.full((2, 2), 0.25)) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert cosine_similarity(np.eye(2), np.full((2, 2), 0.25)) == pytest.approx(0.7071, abs=1e-4)


def test_similarity_zero_matrix():
    with pytest.raises(ValueError):
        cosine_similarity(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros((2, 2)), np.eye(2))


def test_entropy_examples():
    P = perm_matrix(list(np.random.default_rng(1).permutation(10)))
    assert plan_entropy(P / 10) == pytest.approx(math.log(10), abs=1e-12)
    assert plan_entropy(np.full((10, 10), 0.01)) == pytest.approx(2 * math.log(10), abs=1e-12)
    single = np.zeros((3, 3))
    single[1, 2] = 1.0
    assert plan_entropy(single) == 0.0


def test_entropy_negative_entries():
    with pytest.raises(ValueError):
        plan_entropy(np.array([[0.5, -0.1]]))


def test_evaluate_bundle():
    P = perm_matrix([1, 0])
    out = evaluate(P, P / 2, k=1)
    assert out == {"acc_k": 1.0, "k": 1, "sim": pytest.approx(1.0), "entropy": pytest.approx(math.log(2))}
