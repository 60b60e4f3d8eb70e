import numpy as np
import pytest
from scipy.special import zeta

from reposim.powerlaw import (
    fit_discrete_power_law,
    rank_selection_exponent,
    rank_weights,
    sample_discrete_power_law,
)


def test_sampler_matches_pmf():
    rng = np.random.default_rng(7)
    gamma, xmin = 2.5, 1
    x = sample_discrete_power_law(gamma, xmin, 200_000, rng)
    assert x.min() >= xmin
    norm = zeta(gamma, xmin)
    for v in (1, 2, 3, 5):
        expected = v ** (-gamma) / norm
        observed = float(np.mean(x == v))
        assert observed == pytest.approx(expected, abs=4 * np.sqrt(expected / x.size) + 1e-4)


def test_mle_round_trip_known_gamma():
    rng = np.random.default_rng(42)
    x = sample_discrete_power_law(1.81, 3, 100_000, rng)
    fit = fit_discrete_power_law(x, xmin=3)
    assert fit.gamma == pytest.approx(1.81, abs=0.05)


def test_xmin_selection_recovers_cutoff():
    rng = np.random.default_rng(3)
    # body below the cutoff + power-law tail above it
    body = rng.integers(1, 3, size=30_000)
    tail = sample_discrete_power_law(2.2, 3, 60_000, rng)
    fit = fit_discrete_power_law(np.concatenate([body, tail]))
    assert fit.xmin >= 3
    assert fit.gamma == pytest.approx(2.2, abs=0.1)


def test_fit_rejects_tiny_input():
    with pytest.raises(ValueError):
        fit_discrete_power_law([5])


def test_rank_exponent_zipf_case():
    # gamma = 2 corresponds to Zipf rank weights 1/k
    assert rank_selection_exponent(2.0) == pytest.approx(1.0)
    w = rank_weights(4, 2.0)
    assert w == pytest.approx([1.0, 0.5, 1 / 3, 0.25])


def test_rank_weights_decreasing():
    w = rank_weights(100, 1.81)
    assert np.all(np.diff(w) < 0)
