"""Tests for plane trees, their codings and the condensation statistics."""

import numpy as np
import pytest

from errors import ValidationError
from oracle import catalan, enumerate_trees
from tree import (
    Forest, LukasiewiczPath, PlaneTree, contour_function, decode_varints, descendant_height,
    encode_varints, forest_from_lukasiewicz, forest_height_function, forest_lukasiewicz,
    from_csv_row, height_from_path, height_function, lukasiewicz, modified_path, stats,
    subtree_forest, subtree_heights, to_csv_row, tree_from_lukasiewicz,
)

# root with children a (one child) and b (two children)
SAMPLE = PlaneTree([2, 1, 0, 2, 0, 0])


def test_star_statistics():
    """A star has its condensation vertex at the root with unit subtrees."""
    s = stats(PlaneTree.star(5))
    assert (s.n, s.delta, s.second_degree) == (6, 5, 0)
    assert (s.u_star_index, s.u_star_generation, s.height) == (0, 0, 1)
    assert s.xi.tolist() == [1, 1, 1, 1, 1]
    assert s.z_partial.tolist() == [1, 2, 3, 4, 5]
    assert s.xi_max == 1


def test_chain_statistics():
    """Ties for the maximal degree resolve to the first vertex."""
    s = stats(PlaneTree.chain(4))
    assert (s.delta, s.u_star_index, s.height) == (1, 0, 3)
    assert s.xi.tolist() == [3]


def test_leaf_statistics():
    """The one-vertex tree has no children under u*."""
    s = stats(PlaneTree.leaf())
    assert (s.n, s.delta, s.second_degree, s.xi_max) == (1, 0, 0, 0)
    assert len(s.zeta_tilde) == 0


def test_depths_parents_and_labels():
    """Depth-first structure and Ulam-Harris labels."""
    assert SAMPLE.depths.tolist() == [0, 1, 2, 1, 2, 2]
    assert SAMPLE.parents.tolist() == [-1, 0, 1, 0, 3, 3]
    assert SAMPLE.label(5) == (2, 2)
    assert SAMPLE.index_of((2, 1)) == 4
    assert SAMPLE.subtree_size(3) == 3
    assert SAMPLE.subtree(1) == PlaneTree([1, 0])
    with pytest.raises(ValidationError):
        SAMPLE.index_of((3,))


def test_invalid_degree_sequences():
    """Sequences that do not code one tree are rejected."""
    with pytest.raises(ValidationError):
        PlaneTree([1, 0, 0])
    with pytest.raises(ValidationError):
        PlaneTree([0, 1, 0])
    with pytest.raises(ValidationError):
        PlaneTree([])


def test_lukasiewicz_path_of_star():
    """W of a star climbs to k - 1 then steps down to -1."""
    path = lukasiewicz(PlaneTree.star(5))
    assert path.values.tolist() == [0, 4, 3, 2, 1, 0, -1]
    assert tree_from_lukasiewicz(path) == PlaneTree.star(5)


def test_lukasiewicz_rejects_bad_paths():
    """Early visits to -1 and jumps below -1 are invalid."""
    with pytest.raises(ValidationError):
        tree_from_lukasiewicz(LukasiewiczPath(np.array([0, -1, -2])))
    with pytest.raises(ValidationError):
        tree_from_lukasiewicz(LukasiewiczPath(np.array([0, 2, 0, -1])))
    with pytest.raises(ValidationError):
        tree_from_lukasiewicz(LukasiewiczPath(np.array([0, 1, 0])))


def test_height_function_matches_counting_formula():
    """H read from depths equals the counting formula on W."""
    assert height_function(SAMPLE).tolist() == [0, 1, 2, 1, 2, 2, 0]
    assert np.array_equal(height_from_path(lukasiewicz(SAMPLE).values), height_function(SAMPLE))


def test_contour_function():
    """Contour of a chain goes up and back down, padded with zeros."""
    contour = contour_function(PlaneTree.chain(3))
    assert contour.tolist() == [0, 1, 2, 1, 0, 0, 0]
    assert len(contour_function(SAMPLE)) == 2 * SAMPLE.size + 1


def test_forest_coding_round_trip():
    """A forest path splits at its successive new minima."""
    forest = Forest([PlaneTree.star(2), PlaneTree.leaf(), PlaneTree.chain(2)])
    path = forest_lukasiewicz(forest)
    assert path.values[-1] == -3
    decoded = forest_from_lukasiewicz(path)
    assert [t.degrees.tolist() for t in decoded.trees] == [[2, 0, 0], [0], [1, 0]]
    assert forest_height_function(forest).tolist() == [0, 1, 1, 0, 0, 1, 0]
    assert np.array_equal(height_from_path(path.values), forest_height_function(forest))


def test_modified_path_and_subtree_sizes():
    """zeta~_j are first passage times of the shifted path below -j."""
    tree = PlaneTree([1, 3, 1, 0, 0, 2, 0, 0])
    values, pivot, zeta = modified_path(tree)
    assert zeta.tolist() == [2, 3, 6]
    assert values.values[zeta[-1]] == -3
    assert values.values[pivot] == values.values.min()
    s = stats(tree)
    assert s.u_star_index == 1 and s.u_star_generation == 1
    assert s.xi.tolist() == [2, 1, 3]
    assert s.second_degree == 2


def test_modified_path_identities():
    """Pivot, endpoint, forest prefixes and the re-based suffix hold on every tree up to 9 vertices."""
    checked = 0
    for n in range(1, 10):
        for tree in enumerate_trees(n):
            checked += 1
            path, pivot, zeta = modified_path(tree)
            s = stats(tree)
            values = path.values
            assert len(values) == n
            assert s.u_star_index == n - 1 - pivot
            assert s.delta == -values[n - 1]
            for k in range(1, s.delta + 1):
                prefix = forest_lukasiewicz(subtree_forest(tree, 1, k, s)).values
                assert np.array_equal(prefix, values[:zeta[k - 1] + 1])
            suffix = values[pivot:] - values[pivot]
            assert np.array_equal(suffix, lukasiewicz(tree).values[:s.u_star_index + 1])
    assert checked == sum(catalan(n - 1) for n in range(1, 10))


def test_subtree_forest_and_heights():
    """Subtrees under u* come out in order with their heights."""
    tree = PlaneTree([1, 3, 1, 0, 0, 2, 0, 0])
    forest = subtree_forest(tree, 1, 3)
    assert [t.degrees.tolist() for t in forest.trees] == [[1, 0], [0], [2, 0, 0]]
    assert subtree_heights(tree).tolist() == [1, 0, 1]
    assert descendant_height(tree) == 2
    with pytest.raises(ValidationError):
        subtree_forest(tree, 2, 4)


def test_text_and_varint_serialization():
    """CSV rows and LEB128 streams decode to the same trees."""
    big = PlaneTree.star(300)
    assert from_csv_row(to_csv_row(SAMPLE)) == SAMPLE
    stream = encode_varints(SAMPLE) + encode_varints(big)
    first, pos = decode_varints(stream)
    second, end = decode_varints(stream, pos)
    assert first == SAMPLE and second == big and end == len(stream)
    # 300 needs two LEB128 bytes
    assert encode_varints(big)[:3] == bytes([0xAD, 0x02, 0xAC])


def test_truncated_varint_stream():
    """A cut stream raises ValidationError."""
    data = encode_varints(PlaneTree.star(300))
    with pytest.raises(ValidationError):
        decode_varints(data[:-2])
    with pytest.raises(ValidationError):
        from_csv_row("2,x,0")
