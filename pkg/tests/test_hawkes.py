import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from hpalign.hawkes import (
    CorpusStats,
    EventSequence,
    HawkesParams,
    InfeasibleParametersError,
    compensator,
    intensity_at,
    neg_log_likelihood,
    nll_gradients,
    simulate,
)

from conftest import random_params, random_sequence


def quad_compensator(params, seq, c):
    """Integrate the intensity numerically, piece by piece between events."""
    knots = np.concatenate([[0.0], seq.times, [seq.horizon]])
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b > a:
            total += integrate.quad(lambda t: intensity_at(params, seq, c, t), a, b, epsabs=0, epsrel=1e-12)[0]
    return total


def brute_nll(params, sequences):
    out = 0.0
    for s in sequences:
        for t, c in zip(s.times, s.types):
            out -= math.log(intensity_at(params, s, int(c), t))
        for c in range(params.num_types):
            out += quad_compensator(params, s, c)
    return out


# ---------------------------------------------------------------- types


def test_sequence_invariants_enforced():
    with pytest.raises(ValueError):
        EventSequence([1.0, 1.0], [0, 0], 2.0, 1)
    with pytest.raises(ValueError):
        EventSequence([1.0, 3.0], [0, 0], 2.0, 1)
    with pytest.raises(ValueError):
        EventSequence([1.0], [2], 2.0, 2)
    with pytest.raises(ValueError):
        EventSequence([], [], 0.0, 1)


def test_from_events_breaks_ties_with_warning():
    with pytest.warns(UserWarning, match="tied"):
        s = EventSequence.from_events([1.0, 0.5, 1.0, 1.0], [0, 1, 1, 0], 2.0, 2)
    assert np.all(np.diff(s.times) > 0)
    assert s.times[1] == 1.0 and s.times[2] == np.nextafter(1.0, 2.0)
    assert list(s.types) == [1, 0, 1, 0]


def test_params_validation_and_stability():
    with pytest.raises(ValueError):
        HawkesParams([-1.0], [[0.0]])
    with pytest.raises(ValueError):
        HawkesParams([1.0], [[0.0]], beta=0.0)
    p = HawkesParams([0.1, 0.1], [[0.5, 0.2], [0.2, 0.5]], beta=1.0)
    assert p.spectral_radius() == pytest.approx(0.7)
    assert p.is_stable()
    assert not HawkesParams([0.1], [[2.0]], beta=2.0).is_stable()


# ---------------------------------------------------------------- intensity


def test_intensity_zero_infectivity_is_base_rate(rng):
    p = HawkesParams([0.5, 0.1], np.zeros((2, 2)))
    s = random_sequence(rng, 2, horizon=5.0)
    assert intensity_at(p, s, 0, 1.0) == 0.5


def test_intensity_single_event():
    p = HawkesParams([0.2, 0.0], [[0.0, 0.3], [0.0, 0.0]])
    s = EventSequence([1.0], [1], 3.0, 2)
    assert intensity_at(p, s, 0, 2.0) == pytest.approx(0.2 + 0.3 * math.exp(-1.0), abs=1e-15)
    assert intensity_at(p, s, 0, 2.0) == pytest.approx(0.31036, abs=1e-5)


def test_intensity_empty_history_zero_base():
    p = HawkesParams([0.0], [[0.4]])
    s = EventSequence([], [], 1.0, 1)
    assert intensity_at(p, s, 0, 0.5) == 0.0


def test_intensity_invalid_type():
    p = HawkesParams([0.1, 0.1], np.zeros((2, 2)))
    s = EventSequence([], [], 1.0, 2)
    with pytest.raises(ValueError):
        intensity_at(p, s, 2, 0.5)
    with pytest.raises(ValueError):
        intensity_at(p, s, -1, 0.5)


def test_intensity_left_limit_at_events_and_right_continuity(rng):
    p = random_params(rng, 3)
    s = random_sequence(rng, 3)
    for t, c in zip(s.times, s.types):
        # at an event only strictly earlier events count
        before = intensity_at(p, s, 0, t)
        just_after = intensity_at(p, s, 0, float(np.nextafter(t, np.inf)))
        assert just_after - before == pytest.approx(p.A[0, c], rel=1e-9, abs=1e-12)
        later = intensity_at(p, s, 0, min(t + 1e-9, s.horizon))
        assert later == pytest.approx(just_after, rel=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(0, 10))
def test_intensity_at_least_base_rate(seed, t):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3)
    s = random_sequence(rng, 3)
    for c in range(3):
        assert intensity_at(p, s, c, t) >= p.mu[c]


# ---------------------------------------------------------------- compensator


def test_compensator_poisson():
    p = HawkesParams([1.0], [[0.0]])
    s = EventSequence([0.3, 1.2], [0, 0], 2.0, 1)
    assert compensator(p, s, 0) == 2.0


def test_compensator_single_kernel():
    p = HawkesParams([0.0, 0.0], [[0.0, 1.0], [0.0, 0.0]])
    s = EventSequence([0.0], [1], 1.0, 2)
    assert compensator(p, s, 0) == pytest.approx(1 - math.exp(-1), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_compensator_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3, beta=rng.uniform(0.5, 2.0))
    s = random_sequence(rng, 3)
    for c in range(3):
        assert compensator(p, s, c) == pytest.approx(quad_compensator(p, s, c), rel=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0), st.floats(0.0, 1.0))
def test_compensator_monotone_in_horizon_and_row(seed, extra, bump):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3)
    s = random_sequence(rng, 3)
    longer = EventSequence(s.times, s.types, s.horizon + extra, 3)
    A = p.A.copy()
    j = int(rng.integers(3))
    A[0, j] += bump
    bumped = HawkesParams(p.mu, A, p.beta)
    assert compensator(p, longer, 0) >= compensator(p, s, 0)
    assert compensator(bumped, s, 0) >= compensator(p, s, 0)


# ---------------------------------------------------------------- likelihood


def test_nll_poisson_closed_form():
    p = HawkesParams([1.0], [[0.0]])
    s = EventSequence([0.5, 1.5], [0, 0], 2.0, 1)
    assert neg_log_likelihood(p, [s]) == pytest.approx(2.0, abs=1e-12)


def test_nll_zero_base_rate_is_infeasible():
    p = HawkesParams([0.0], [[0.5]])
    s = EventSequence([0.5, 1.5], [0, 0], 2.0, 1)
    with pytest.raises(InfeasibleParametersError):
        neg_log_likelihood(p, [s])


@pytest.mark.parametrize("seed", range(4))
def test_nll_matches_brute_force_quadrature(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_params(rng, 3)
    seqs = [random_sequence(rng, 3, horizon=rng.uniform(5, 10)) for _ in range(2)]
    assert neg_log_likelihood(p, seqs) == pytest.approx(brute_nll(p, seqs), rel=1e-4)


def test_nll_rejects_mismatched_types(rng):
    p = random_params(rng, 2)
    with pytest.raises(ValueError):
        neg_log_likelihood(p, [random_sequence(rng, 3)])


# ---------------------------------------------------------------- gradients


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_nll_gradient_poisson_closed_form():
    seqs = [EventSequence([0.2, 0.9, 1.4], [0, 1, 0], 2.0, 2), EventSequence([0.5], [0], 3.0, 2)]
    p = HawkesParams([0.7, 0.4], np.zeros((2, 2)))
    g_mu, _ = nll_gradients(p, seqs)
    n = np.array([3, 1])
    np.testing.assert_allclose(g_mu, -n / p.mu + 5.0, rtol=1e-14)
    g_mu, _ = nll_gradients(HawkesParams(n / 5.0, np.zeros((2, 2))), seqs)
    np.testing.assert_allclose(g_mu, 0.0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_nll_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    C = 4
    p = random_params(rng, C)
    seqs = [random_sequence(rng, C, n=20) for _ in range(2)]
    g_mu, g_A = nll_gradients(p, seqs)
    fd_mu = fd_gradient(lambda m: neg_log_likelihood(HawkesParams(m, p.A), seqs), p.mu.copy())
    fd_A = fd_gradient(lambda A: neg_log_likelihood(HawkesParams(p.mu, A), seqs), p.A.copy())
    assert rel_err(g_mu, fd_mu) <= 1e-4
    assert rel_err(g_A, fd_A) <= 1e-4


def test_sgd_full_batch_is_exact(rng):
    C = 3
    p = random_params(rng, C)
    seqs = [random_sequence(rng, C, n=25) for _ in range(3)]
    full = nll_gradients(p, seqs)
    stats_ = CorpusStats.from_sequences(seqs)
    est = nll_gradients(p, stats_, batch_size=stats_.num_events, history_window=None, rng=0)
    np.testing.assert_allclose(est[0], full[0], rtol=0, atol=1e-10)
    np.testing.assert_allclose(est[1], full[1], rtol=0, atol=1e-10)
    # a window covering every event is also exact
    est = nll_gradients(p, stats_, batch_size=stats_.num_events, history_window=10**6, rng=0)
    np.testing.assert_allclose(est[1], full[1], rtol=0, atol=1e-10)


def test_sgd_minibatch_is_unbiased_without_truncation(rng):
    C = 2
    p = random_params(rng, C)
    seqs = [random_sequence(rng, C, n=12) for _ in range(2)]
    full_mu, full_A = nll_gradients(p, seqs)
    stats_ = CorpusStats.from_sequences(seqs)
    r = np.random.default_rng(7)
    draws = [stats_.stochastic_gradients(p.mu, p.A, 4, None, r) for _ in range(4000)]
    mean_mu = np.mean([d[0] for d in draws], axis=0)
    sd_mu = np.std([d[0] for d in draws], axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(mean_mu - full_mu) < 4 * sd_mu + 1e-12)


def test_history_window_truncates():
    s = EventSequence([0.0, 1.0, 2.0], [0, 0, 0], 3.0, 1)
    stats_ = CorpusStats.from_sequences([s])
    f = stats_._truncated_features(np.array([2]), 1)
    assert f[0, 0] == pytest.approx(math.exp(-1.0))
    assert stats_.features[2, 0] == pytest.approx(math.exp(-1.0) + math.exp(-2.0))


# ---------------------------------------------------------------- simulation


def test_simulate_zero_base_rate_is_empty():
    p = HawkesParams([0.0, 0.0], [[0.3, 0.1], [0.1, 0.3]])
    s = simulate(p, 50.0, seed=1)
    assert len(s) == 0 and s.horizon == 50.0


def test_simulate_rejects_unstable():
    with pytest.raises(ValueError, match="unstable"):
        simulate(HawkesParams([0.1], [[1.5]]), 10.0, seed=0)


def test_simulate_is_seeded(rng):
    p = random_params(rng, 3)
    a, b = simulate(p, 20.0, seed=5), simulate(p, 20.0, seed=5)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.types, b.types)


@given(st.integers(0, 2**32 - 1))
def test_simulate_output_is_valid_sequence(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, 3, a_scale=0.3)
    s = simulate(p, 15.0, seed=seed)
    assert np.all(np.diff(s.times) > 0)
    assert np.all((s.times >= 0) & (s.times <= 15.0))
    assert np.all((s.types >= 0) & (s.types < 3))


def test_simulate_poisson_gaps_and_counts():
    p = HawkesParams([2.0], [[0.0]])
    s = simulate(p, 2000.0, seed=3)
    gaps = np.diff(np.concatenate([[0.0], s.times]))
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01
    counts = np.array([len(simulate(p, 100.0, seed=k)) for k in range(200)])
    assert abs(counts.mean() - 200.0) < 3 * np.sqrt(200.0 / len(counts))


def test_simulate_mean_count_matches_branching_rate():
    p = HawkesParams([0.3, 0.2], [[0.4, 0.2], [0.1, 0.3]], beta=1.5)
    T = 50.0
    counts = np.array([len(simulate(p, T, seed=k)) for k in range(200)])
    # stationary-rate approximation; the warm-up transient is < 1 event here
    expected = T * p.stationary_rate().sum()
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - expected) < 3 * se
