"""Tests for bridge tables, the size law and exact bridge sampling."""

import math

import numpy as np
import pytest

from errors import ConsistencyError, RejectionExhausted, ResourceError, ValidationError
from offspring import step_law
from oracle import size_probability
from samplers import tree_from_bridge
from walk import (
    bridge_table, exchange_T, halving_closure, kemperman_size_pmf, rejection_bridge,
    rejection_bridge_batch, sample_bridge, size_pmf, vervaat,
)


def test_vervaat_example():
    """The shift starts right after the first minimum of the partial sums."""
    assert vervaat([1, -1, -1, 1, -1]).tolist() == [1, -1, 1, -1, -1]
    with pytest.raises(ValidationError):
        vervaat([])


def test_exchange_operator_example():
    """The first maximum trades places with the last entry."""
    assert exchange_T([3, 1, 2]).tolist() == [2, 1, 3]
    assert exchange_T([1, 5, 5, 0]).tolist() == [1, 0, 5, 5]


def test_halving_closure():
    """Closure of 10 under L -> (L // 2, L - L // 2)."""
    assert halving_closure(10) == {10, 5, 3, 2, 1}
    assert halving_closure(1) == {1}


def test_three_step_bridge_probability(dist):
    """q_3(-1) = 3 mu_2 mu_0^2 + 3 mu_1^2 mu_0."""
    table = bridge_table(step_law(dist), 3)
    mu = dist.pmf(np.arange(3))
    expected = 3 * mu[2] * mu[0] ** 2 + 3 * mu[1] ** 2 * mu[0]
    assert table.bridge_probability == pytest.approx(expected, rel=1e-12)


def test_full_and_dyadic_tables_agree(dist):
    """Both layouts give the same q_n(-1)."""
    step = step_law(dist)
    full = bridge_table(step, 40, mode='full')
    dyadic = bridge_table(step, 40, mode='dyadic')
    assert full.bridge_probability == pytest.approx(dyadic.bridge_probability, rel=1e-12)
    assert set(full.levels) == set(range(1, 41))
    assert 40 in dyadic.levels and 39 not in dyadic.levels


def test_table_pmf_windows(dist):
    """Level 0 is a point mass; below the window is zero; above raises."""
    table = bridge_table(step_law(dist), 10)
    assert table.pmf(0, 0) == 1.0 and table.pmf(0, 3) == 0.0
    assert table.pmf(4, -5) == 0.0
    assert table.pmf(1, -1) == pytest.approx(dist.pmf(0))
    with pytest.raises(ConsistencyError):
        table.pmf(4, 6)


def test_memory_budget(dist):
    """Tables over budget raise ResourceError with advice."""
    with pytest.raises(ResourceError, match="dyadic"):
        bridge_table(step_law(dist), 1000, mode='full', memory_budget_mb=0.1)


def test_table_cache_round_trip(dist, tmp_path):
    """A cached table loads back with identical levels."""
    step = step_law(dist)
    built = bridge_table(step, 33, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("bridge_33_*.npz"))) == 1
    loaded = bridge_table(step, 33, cache_dir=tmp_path)
    assert set(built.levels) == set(loaded.levels)
    for length, values in built.levels.items():
        assert np.array_equal(values, loaded.levels[length])


@pytest.mark.parametrize("law", ["dist", "dist_stable", "dist_three"])
def test_kemperman_matches_enumeration(law, request):
    """q_n(-1)/n equals the summed weights of all trees of size n, up to n = 12."""
    offspring = request.getfixturevalue(law)
    for n in range(1, 13):
        exact = size_probability(offspring, n)
        assert kemperman_size_pmf(offspring, n) == pytest.approx(exact, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("law", ["dist", "dist_stable", "dist_three"])
@pytest.mark.parametrize("mode", ["dyadic", "full"])
def test_fft_levels_match_direct_convolution(law, mode, request):
    """FFT-built levels agree with direct convolution to 1e-10 for n <= 256."""
    step = step_law(request.getfixturevalue(law))
    for n in (16, 64, 256):
        direct = bridge_table(step, n, mode=mode)
        fast = bridge_table(step, n, mode=mode, use_fft=True)
        assert fast.use_fft and not direct.use_fft
        assert set(fast.levels) == set(direct.levels)
        worst = max(float(np.max(np.abs(fast.levels[L] - direct.levels[L]))) for L in direct.levels)
        assert worst <= 1e-10
        assert fast.bridge_probability == pytest.approx(direct.bridge_probability, rel=1e-8)


def test_size_pmf_vector(dist):
    """size_pmf agrees with Kemperman pointwise and nearly exhausts the mass."""
    sizes = size_pmf(dist, 500)
    assert sizes[0] == 0.0
    assert sizes[1] == pytest.approx(dist.pmf(0))
    for n in (2, 7, 30):
        assert sizes[n] == pytest.approx(kemperman_size_pmf(dist, n), rel=1e-10)
    assert 0.9999 < math.fsum(sizes) <= 1.0 + 1e-12


@pytest.mark.parametrize("mode", ["dyadic", "full"])
def test_bridge_samples_are_bridges(dist, rng, mode):
    """Samples have n steps >= -1 summing to -1 and decode to trees."""
    table = bridge_table(step_law(dist), 57, mode=mode)
    for _ in range(20):
        steps = sample_bridge(table, rng)
        assert len(steps) == 57 and steps.sum() == -1 and steps.min() >= -1
        assert tree_from_bridge(steps).size == 57


def test_first_step_law(dist, rng):
    """P(X_1 = -1 | W_n = -1) = nu(-1) q_{n-1}(0) / q_n(-1)."""
    n = 12
    step = step_law(dist)
    table = bridge_table(step, n, mode='full')
    expected = dist.pmf(0) * table.pmf(n - 1, 0) / table.bridge_probability
    count = 20_000
    hits = sum(sample_bridge(table, rng)[0] == -1 for _ in range(count))
    se = math.sqrt(expected * (1 - expected) / count)
    assert abs(hits / count - expected) < 4 * se


def test_rejection_bridges(dist, rng):
    """Accepted proposals are bridges; a tiny budget runs out."""
    step = step_law(dist)
    samples, tries = rejection_bridge_batch(step, 5, rng, count=50, max_tries=10**6)
    assert samples.shape == (50, 5)
    assert (samples.sum(axis=1) == -1).all()
    assert tries >= 50
    assert rejection_bridge(step, 1, rng).tolist() == [-1]
    with pytest.raises(RejectionExhausted):
        rejection_bridge(step, 400, rng, max_tries=5)
