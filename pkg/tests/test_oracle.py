"""Tests for exhaustive enumeration and exact conditional laws."""

import math

import pytest

from errors import OutOfRangeError, UnknownStatisticError
from oracle import (
    catalan, enumerate_degree_sequences, enumerate_trees, exact_conditional_law, exact_tree_law,
    get_extractor, size_probability,
)
from tree import PlaneTree


def test_catalan_counts():
    """Trees with n vertices number Catalan(n - 1)."""
    assert [catalan(k) for k in (0, 3, 9)] == [1, 5, 4862]
    for n, expected in ((1, 1), (4, 5), (10, 4862)):
        assert sum(1 for _ in enumerate_trees(n)) == expected


def test_enumeration_is_lexicographic_and_valid():
    """Degree sequences come sorted and each codes a tree."""
    sequences = list(enumerate_degree_sequences(6))
    assert sequences == sorted(sequences)
    assert len(set(sequences)) == catalan(5)
    for degrees in sequences:
        PlaneTree(degrees)


def test_enumeration_range():
    """n outside 1..14 is refused."""
    with pytest.raises(OutOfRangeError):
        list(enumerate_trees(0))
    with pytest.raises(OutOfRangeError):
        exact_conditional_law(None, 15, 'delta')


def test_delta_law_at_three(dist):
    """At n = 3 only the cherry and the path compete."""
    mu = dist.pmf(range(3))
    star = mu[2] * mu[0] ** 2
    path = mu[1] ** 2 * mu[0]
    law = exact_conditional_law(dist, 3, 'delta')
    assert law.prob(2) == pytest.approx(star / (star + path), rel=1e-12)
    assert law.prob(1) == pytest.approx(path / (star + path), rel=1e-12)
    assert law.size_probability == pytest.approx(star + path, rel=1e-12)
    assert law.support() == [1, 2]


def test_laws_are_normalised(dist):
    """Every exact law sums to one."""
    for statistic in ('delta', 'height', 'u_index', 'xi_max', 'root_degree', 'H:3'):
        law = exact_conditional_law(dist, 8, statistic)
        assert math.fsum(law.pmf.values()) == pytest.approx(1.0, abs=1e-12)
    tree_law = exact_tree_law(dist, 7)
    assert len(tree_law) == catalan(6)
    assert math.fsum(tree_law.values()) == pytest.approx(1.0, abs=1e-12)


def test_size_probability_consistent(dist):
    """size_probability agrees with the normaliser of the exact laws."""
    assert size_probability(dist, 9) == pytest.approx(
        exact_conditional_law(dist, 9, 'height').size_probability, rel=1e-12)


def test_joint_and_conditioned_statistics(dist):
    """Joint names give tuples; subtree_pair is conditioned on Delta >= 2."""
    pair = exact_conditional_law(dist, 3, 'subtree_pair')
    assert pair.pmf == pytest.approx({(1, 1): 1.0})
    joint = exact_conditional_law(dist, 5, 'delta,height')
    assert all(isinstance(k, tuple) and len(k) == 2 for k in joint.pmf)
    assert joint.prob((4, 1)) > 0


def test_partial_sum_capped_at_delta(dist):
    """Z:j for j beyond Delta equals Z_Delta, the subtree size of u* minus one."""
    law = exact_conditional_law(dist, 3, 'Z:5')
    assert law.pmf == pytest.approx({2: 1.0})


def test_height_function_statistic_at_end(dist):
    """H_n = 0 for every tree."""
    assert exact_conditional_law(dist, 6, 'H:6').pmf == pytest.approx({0: 1.0})


def test_unknown_statistic():
    """Names outside the catalogue raise UnknownStatisticError."""
    with pytest.raises(UnknownStatisticError):
        get_extractor('diameter')
    with pytest.raises(UnknownStatisticError):
        get_extractor('H:x')
    with pytest.raises(UnknownStatisticError):
        get_extractor('')
