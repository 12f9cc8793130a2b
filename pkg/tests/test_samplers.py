"""Tests for the tree samplers."""

import math
from collections import Counter

import numpy as np
import pytest

from errors import SizeCapExceeded, ValidationError
from oracle import exact_conditional_law, exact_tree_law
from samplers import (
    ConditionedSampler, sample_condensation_approx, sample_conditioned, sample_gw,
    sample_gw_generations, sample_that_truncated, tree_from_bridge,
)
from stats import tv_distance
from tree import PlaneTree, stats as tree_stats


def test_sample_gw_mean_size(dist, rng):
    """E|tau| = 1 / (1 - m)."""
    sizes = [sample_gw(dist, rng).size for _ in range(20_000)]
    assert np.mean(sizes) == pytest.approx(1 / (1 - dist.mean_m), abs=0.1)


def test_sample_gw_size_cap(dist):
    """A cap of one vertex fails as soon as the root has children."""
    rng = np.random.default_rng(7)
    raised = False
    for _ in range(50):
        try:
            assert sample_gw(dist, rng, size_cap=1).size == 1
        except SizeCapExceeded as e:
            assert e.size_cap == 1
            raised = True
    assert raised


def test_generations_sizes_and_heights(dist, rng):
    """Generation-wise simulation has the same mean size; height 0 means a single leaf."""
    sizes, heights = sample_gw_generations(dist, rng, 50_000, batch=20_000)
    assert (sizes >= 1).all()
    assert sizes.mean() == pytest.approx(2.0, abs=0.06)
    assert ((heights == 0) == (sizes == 1)).all()
    assert (heights == 0).mean() == pytest.approx(dist.pmf(0), abs=0.01)


def test_tree_from_bridge():
    """A cyclic shift of a star's steps decodes back to the star."""
    steps = np.array([-1, -1, 1])
    assert tree_from_bridge(steps) == PlaneTree.star(2)


def test_auto_method_resolution(dist):
    """auto picks rejection for small n and bridges beyond the threshold."""
    assert ConditionedSampler(dist, 10).resolved == 'rejection'
    sampler = ConditionedSampler(dist, 200, rejection_max_n=64)
    assert sampler.resolved == 'exact-bridge'
    assert sampler.table is not None and sampler.table.n == 200
    with pytest.raises(ValidationError):
        ConditionedSampler(dist, 10, method='mcmc')
    with pytest.raises(ValidationError):
        ConditionedSampler(dist, 0)


@pytest.mark.parametrize("method", ["rejection", "exact-bridge"])
def test_conditioned_sampler_matches_oracle(dist, method):
    """Empirical law of trees with 6 vertices is close to the exact one."""
    rng = np.random.default_rng(2024)
    count = 20_000
    sampler = ConditionedSampler(dist, 6, method=method, table_mode='full')
    counts = Counter(tuple(t.degrees.tolist()) for t in sampler.sample_many(rng, count))
    exact = exact_tree_law(dist, 6)
    empirical = {k: c / count for k, c in counts.items()}
    assert set(empirical) <= set(exact)
    bound = 3 * math.sqrt(len(exact) / (2 * math.pi * count))
    assert tv_distance(empirical, exact) < bound


def test_sample_conditioned_size(dist, rng):
    """Trees have exactly n vertices under both methods."""
    assert sample_conditioned(dist, 30, rng, method='rejection').size == 30
    assert sample_conditioned(dist, 300, rng).size == 300


def test_condensation_approx(dist, rng):
    """The approximate sampler hits n exactly and has one dominant degree."""
    n = 2000
    trees = [sample_condensation_approx(dist, n, rng) for _ in range(20)]
    assert all(t.size == n for t in trees)
    ratios = [t.degrees.max() * (1 - dist.mean_m) / n for t in trees]
    assert np.median(ratios) == pytest.approx(1.0, abs=0.2)
    with pytest.raises(ValidationError):
        sample_condensation_approx(dist, 0, rng)


def test_truncated_local_limit(dist, rng):
    """T^ windows carry their truncation flags; the top spine vertex has width_cap children."""
    for _ in range(50):
        window = sample_that_truncated(dist, depth_cap=5, width_cap=8, rng=rng)
        assert window.spine_length >= 1
        assert window.spine_indices[0] == 0
        assert len(window.spine_indices) == window.spine_length
        assert window.tree.degrees[window.top_index] == 8
        meta = window.metadata()
        assert meta['vertices'] == window.tree.size
        assert set(meta) >= {'depth_truncated', 'width_truncated', 'spine_length'}
        assert window.tree.depths.max() <= window.spine_length + 5
    with pytest.raises(ValidationError):
        sample_that_truncated(dist, 0, 8, rng)


@pytest.mark.slow
def test_joint_law_at_eight_vertices(dist):
    """Joint law of (Delta, U, height) from 10^5 exact draws is within TV 0.02 of enumeration."""
    rng = np.random.default_rng(8)
    count = 100_000
    sampler = ConditionedSampler(dist, 8, method='exact-bridge', table_mode='full')
    counts: Counter = Counter()
    for _ in range(count):
        s = tree_stats(sampler.sample(rng))
        counts[(int(s.delta), int(s.u_star_index), int(s.height))] += 1
    exact = exact_conditional_law(dist, 8, 'delta,u_index,height').pmf
    empirical = {k: c / count for k, c in counts.items()}
    assert tv_distance(empirical, exact) < 0.02
