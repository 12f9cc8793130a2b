#!/usr/bin/env python3
"""
Plane trees and their codings.

A PlaneTree is stored as the array of out-degrees of its vertices listed in
lexicographic (depth-first) order. Everything else (labels, parents, depths,
Lukasiewicz path, height and contour functions, the modified path around the
vertex of maximal degree) is derived from that array on demand.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Tuple, Iterable, Optional

import numpy as np

from errors import ValidationError

logger = logging.getLogger('condensation_lab.tree')

PATH_KINDS = ('plain', 'modified', 'forest')


@dataclass(frozen=True)
class LukasiewiczPath:
    """Integer path W_0..W_n with a kind tag (plain | modified | forest)"""
    values: np.ndarray
    kind: str = 'plain'

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValidationError(f"Unknown path kind '{self.kind}', expected one of {PATH_KINDS}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


class PlaneTree:
    """Finite rooted ordered tree indexed in lexicographic order (index 0 is the root)"""

    def __init__(self, degrees: Iterable[int], validate: bool = True):
        self.degrees = np.asarray(degrees, dtype=np.int64)
        if validate:
            _check_degrees(self.degrees)

    @classmethod
    def leaf(cls) -> 'PlaneTree':
        return cls([0], validate=False)

    @classmethod
    def star(cls, k: int) -> 'PlaneTree':
        return cls([k] + [0] * k, validate=False)

    @classmethod
    def chain(cls, n: int) -> 'PlaneTree':
        return cls([1] * (n - 1) + [0], validate=False)

    @property
    def size(self) -> int:
        return len(self.degrees)

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, PlaneTree) and np.array_equal(self.degrees, other.degrees)

    def __hash__(self) -> int:
        return hash(self.degrees.tobytes())

    def __repr__(self) -> str:
        return f"PlaneTree(n={self.size}, degrees={self.degrees.tolist()[:12]}{'...' if self.size > 12 else ''})"

    @cached_property
    def _structure(self) -> Tuple[np.ndarray, np.ndarray]:
        """(depth, parent) arrays from one depth-first pass."""
        degs = self.degrees.tolist()
        n = len(degs)
        depth = [0] * n
        parent = [-1] * n
        # frames are [vertex, children still to visit]
        stack: List[List[int]] = [[0, degs[0]]]
        for i in range(1, n):
            while stack[-1][1] == 0:
                stack.pop()
            top = stack[-1]
            parent[i] = top[0]
            depth[i] = len(stack)
            top[1] -= 1
            stack.append([i, degs[i]])
        return np.asarray(depth, dtype=np.int64), np.asarray(parent, dtype=np.int64)

    @property
    def depths(self) -> np.ndarray:
        return self._structure[0]

    @property
    def parents(self) -> np.ndarray:
        return self._structure[1]

    @property
    def height(self) -> int:
        return int(self.depths.max())

    @cached_property
    def children(self) -> List[List[int]]:
        kids: List[List[int]] = [[] for _ in range(self.size)]
        for i, p in enumerate(self.parents.tolist()):
            if p >= 0:
                kids[p].append(i)
        return kids

    def label(self, i: int) -> Tuple[int, ...]:
        """Ulam-Harris label of vertex i (root is the empty tuple)."""
        if not 0 <= i < self.size:
            raise ValidationError(f"Vertex index {i} outside 0..{self.size - 1}")
        parts = []
        parents = self.parents
        while i > 0:
            p = int(parents[i])
            parts.append(self.children[p].index(i) + 1)
            i = p
        return tuple(reversed(parts))

    def index_of(self, label: Tuple[int, ...]) -> int:
        i = 0
        for j in label:
            if not 1 <= j <= self.degrees[i]:
                raise ValidationError(f"Label {label} is not a vertex of this tree")
            i = self.children[i][j - 1]
        return i

    def subtree_size(self, i: int) -> int:
        """Number of descendants of vertex i, itself included."""
        walk = np.cumsum(self.degrees[i:] - 1)
        return int(np.argmax(walk == -1)) + 1

    def subtree(self, i: int) -> 'PlaneTree':
        return PlaneTree(self.degrees[i:i + self.subtree_size(i)], validate=False)


def _check_degrees(degrees: np.ndarray) -> None:
    if degrees.ndim != 1 or len(degrees) == 0:
        raise ValidationError("A tree needs at least one vertex")
    if (degrees < 0).any():
        raise ValidationError("Out-degrees must be nonnegative")
    walk = np.cumsum(degrees - 1)
    if walk[-1] != -1 or (walk[:-1] < 0).any():
        raise ValidationError("Degree sequence does not code a single plane tree")


@dataclass
class Forest:
    """Ordered sequence of plane trees"""
    trees: List[PlaneTree] = field(default_factory=list)

    @property
    def size(self) -> int:
        return sum(t.size for t in self.trees)

    @property
    def height(self) -> int:
        return max((t.height for t in self.trees), default=-1)

    @property
    def degrees(self) -> np.ndarray:
        if not self.trees:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([t.degrees for t in self.trees])

    def __len__(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class TreeStats:
    """Statistics around the vertex of maximal out-degree"""
    n: int
    delta: int
    second_degree: int
    u_star_index: int
    u_star_generation: int
    height: int
    xi: np.ndarray
    z_partial: np.ndarray
    pivot_I: int
    zeta_tilde: np.ndarray

    @property
    def xi_max(self) -> int:
        return int(self.xi.max()) if len(self.xi) else 0


# -- codings --------------------------------------------------------------

def lukasiewicz(tree: PlaneTree) -> LukasiewiczPath:
    """W_0 = 0, W_{i+1} = W_i + k_{u(i)} - 1; ends at -1."""
    values = np.concatenate(([0], np.cumsum(tree.degrees - 1)))
    return LukasiewiczPath(values=values, kind='plain')


def tree_from_lukasiewicz(path: LukasiewiczPath) -> PlaneTree:
    """Decode a plain path.

    Raises:
        ValidationError: wrong start or terminal value, a step below -1, or
            an early visit to -1.
    """
    values = np.asarray(path.values, dtype=np.int64)
    if len(values) < 2 or values[0] != 0:
        raise ValidationError("Lukasiewicz path must start at 0 and have at least one step")
    steps = np.diff(values)
    if (steps < -1).any():
        raise ValidationError("Lukasiewicz increments must be >= -1")
    if values[-1] != -1:
        raise ValidationError(f"Lukasiewicz path must end at -1, ends at {values[-1]}")
    if (values[1:-1] < 0).any():
        raise ValidationError("Lukasiewicz path hits -1 before its last step")
    return PlaneTree(steps + 1, validate=False)


def forest_lukasiewicz(forest: Forest) -> LukasiewiczPath:
    values = np.concatenate(([0], np.cumsum(forest.degrees - 1)))
    return LukasiewiczPath(values=values, kind='forest')


def forest_from_lukasiewicz(path: LukasiewiczPath) -> Forest:
    """Split a forest path at its successive first hits of -1, -2, ..."""
    values = np.asarray(path.values, dtype=np.int64)
    steps = np.diff(values)
    if len(values) and values[0] != 0:
        raise ValidationError("Forest path must start at 0")
    if (steps < -1).any():
        raise ValidationError("Forest path increments must be >= -1")
    trees = []
    start = 0
    running_min = 0
    for i in range(1, len(values)):
        if values[i] < running_min:
            running_min = values[i]
            trees.append(PlaneTree(steps[start:i] + 1, validate=False))
            start = i
    if start != len(values) - 1:
        raise ValidationError("Forest path does not end at a new minimum")
    return Forest(trees)


def height_function(tree: PlaneTree) -> np.ndarray:
    """H_0..H_n with H_i the depth of u(i) and H_n = 0."""
    return np.append(tree.depths, 0)


def height_from_path(values: np.ndarray) -> np.ndarray:
    """Counting formula H_i = #{k < i : W_k = min_{k<=j<=i} W_j}.

    Works for tree and forest paths; quadratic, meant for verification.
    """
    values = np.asarray(values)
    n = len(values) - 1
    heights = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n):
        backward_min = np.minimum.accumulate(values[i::-1])[::-1]
        heights[i] = int(np.count_nonzero(values[:i] == backward_min[:i]))
    return heights


def forest_height_function(forest: Forest) -> np.ndarray:
    if not forest.trees:
        return np.zeros(1, dtype=np.int64)
    return np.append(np.concatenate([t.depths for t in forest.trees]), 0)


def contour_function(tree: PlaneTree) -> np.ndarray:
    """C_0..C_{2n}; zero on [2(n-1), 2n]."""
    depths = tree.depths.tolist()
    contour = [0]
    for prev, cur in zip(depths, depths[1:]):
        contour.extend(range(prev - 1, cur - 2, -1))
        contour.append(cur)
    contour.extend(range(depths[-1] - 1, -1, -1))
    contour.extend([0, 0])
    return np.asarray(contour, dtype=np.int64)


# -- modified path and statistics -----------------------------------------

def modified_path(tree: PlaneTree) -> Tuple[LukasiewiczPath, int, np.ndarray]:
    """W~ built from the increments cyclically shifted past the maximal jump.

    Returns the path W~_0..W~_{n-1}, the first argmin I and zeta~_1..zeta~_Delta.
    """
    degs = tree.degrees
    u = int(np.argmax(degs))
    steps = np.concatenate((degs[u + 1:], degs[:u])) - 1
    values = np.concatenate(([0], np.cumsum(steps)))
    pivot = int(np.argmin(values))
    delta = int(degs[u])
    running_min = np.minimum.accumulate(values)
    zeta = np.searchsorted(-running_min, np.arange(1, delta + 1), side='left')
    return LukasiewiczPath(values=values, kind='modified'), pivot, zeta.astype(np.int64)


def stats(tree: PlaneTree) -> TreeStats:
    degs = tree.degrees
    n = tree.size
    path, pivot, zeta = modified_path(tree)
    u = int(np.argmax(degs))
    delta = int(degs[u])
    if n > 1:
        second = int(np.partition(degs, n - 2)[n - 2])
    else:
        second = 0
    xi = np.diff(np.concatenate(([0], zeta)))
    return TreeStats(
        n=n,
        delta=delta,
        second_degree=second,
        u_star_index=u,
        u_star_generation=int(tree.depths[u]),
        height=tree.height,
        xi=xi,
        z_partial=zeta.copy(),
        pivot_I=pivot,
        zeta_tilde=zeta,
    )


def subtree_forest(tree: PlaneTree, i: int, j: int, tree_stats: Optional[TreeStats] = None) -> Forest:
    """Forest F_{i,j} of the subtrees of children i..j of u*.

    Raises:
        ValidationError: unless 1 <= i <= j <= Delta.
    """
    st = tree_stats or stats(tree)
    if not 1 <= i <= j <= st.delta:
        raise ValidationError(f"Need 1 <= i <= j <= {st.delta}, got i={i}, j={j}")
    base = st.u_star_index + 1
    offsets = np.concatenate(([0], st.zeta_tilde))
    trees = [
        PlaneTree(tree.degrees[base + offsets[p - 1]: base + offsets[p]], validate=False)
        for p in range(i, j + 1)
    ]
    return Forest(trees)


def descendant_height(tree: PlaneTree, tree_stats: Optional[TreeStats] = None) -> int:
    """Height of the subtree rooted at u*, equal to 1 + height of F_{1,Delta}."""
    st = tree_stats or stats(tree)
    if st.delta == 0:
        return 0
    return 1 + subtree_forest(tree, 1, st.delta, st).height


def subtree_heights(tree: PlaneTree, tree_stats: Optional[TreeStats] = None) -> np.ndarray:
    """Heights of T_1..T_Delta, the subtrees of the children of u*."""
    st = tree_stats or stats(tree)
    depths = tree.depths
    base = st.u_star_index + 1
    offsets = np.concatenate(([0], st.zeta_tilde)) + base
    root_depth = int(depths[st.u_star_index]) + 1
    if st.delta == 0:
        return np.zeros(0, dtype=np.int64)
    return np.maximum.reduceat(depths[base:offsets[-1]], offsets[:-1] - base) - root_depth


# -- serialization ----------------------------------------------------------

def to_csv_row(tree: PlaneTree) -> str:
    return ",".join(str(int(d)) for d in tree.degrees)


def from_csv_row(row: str) -> PlaneTree:
    try:
        degrees = [int(x) for x in row.strip().split(",") if x != ""]
    except ValueError as e:
        raise ValidationError(f"Bad tree row: {e}") from e
    return PlaneTree(degrees)


def _write_varint(value: int, out: bytearray) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ValidationError("Truncated varint stream")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def encode_varints(tree: PlaneTree) -> bytes:
    """Length-prefixed unsigned LEB128 encoding of the degree sequence."""
    out = bytearray()
    _write_varint(tree.size, out)
    for d in tree.degrees.tolist():
        _write_varint(d, out)
    return bytes(out)


def decode_varints(data: bytes, pos: int = 0) -> Tuple[PlaneTree, int]:
    """Decode one tree; returns it with the position after it."""
    n, pos = _read_varint(data, pos)
    degrees = []
    for _ in range(n):
        d, pos = _read_varint(data, pos)
        degrees.append(d)
    return PlaneTree(degrees), pos
