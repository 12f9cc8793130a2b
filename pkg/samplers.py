#!/usr/bin/env python3
"""
Tree samplers: unconditioned Galton-Watson trees, trees conditioned on their
size (exact, through walk bridges and the Vervaat transform), an approximate
condensation sampler built around a short spine, and truncated draws of the
local limit T^.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from errors import ConsistencyError, RejectionExhausted, SizeCapExceeded, ValidationError
from offspring import OffspringDistribution, size_biased, step_law
from tree import PlaneTree
from walk import (
    BridgeTable, bridge_table, rejection_bridge, sample_bridge, vervaat,
    DEFAULT_EPS_TRUNC, DEFAULT_LEAF_SIZE, DEFAULT_MEMORY_BUDGET_MB,
)

logger = logging.getLogger('condensation_lab.samplers')

METHODS = ('auto', 'exact-bridge', 'rejection')
DEFAULT_REJECTION_MAX_N = 64
DEFAULT_REJECTION_MAX_TRIES = 10**7


# -- unconditioned trees ---------------------------------------------------------

def sample_gw(dist: OffspringDistribution, rng: np.random.Generator, size_cap: int = 10**7) -> PlaneTree:
    """Run the step walk until it first hits -1 and decode the tree.

    Raises:
        SizeCapExceeded: if the tree would have more than size_cap vertices.
    """
    chunks = []
    walk = 0
    drawn = 0
    chunk = 16
    while True:
        degrees = dist.sample(rng, chunk)
        path = walk + np.cumsum(degrees - 1)
        hit = np.flatnonzero(path == -1)
        if len(hit):
            chunks.append(degrees[:hit[0] + 1])
            break
        chunks.append(degrees)
        drawn += chunk
        walk = int(path[-1])
        if drawn >= size_cap:
            raise SizeCapExceeded(size_cap)
        chunk = min(chunk * 2, 1 << 16)
    degrees = np.concatenate(chunks)
    if len(degrees) > size_cap:
        raise SizeCapExceeded(size_cap)
    return PlaneTree(degrees, validate=False)


def sample_gw_generations(dist: OffspringDistribution, rng: np.random.Generator, count: int,
                          size_cap: int = 10**7, batch: int = 10**6) -> Tuple[np.ndarray, np.ndarray]:
    """Sizes and heights of `count` independent trees, simulated generation by generation.

    Trees above size_cap are reported with size -1 and height -1.
    """
    sizes = np.empty(count, dtype=np.int64)
    heights = np.empty(count, dtype=np.int64)
    for start in range(0, count, batch):
        stop = min(start + batch, count)
        width = stop - start
        population = np.ones(width, dtype=np.int64)
        size = np.ones(width, dtype=np.int64)
        height = np.zeros(width, dtype=np.int64)
        generation = 0
        while population.any():
            generation += 1
            alive = np.flatnonzero(population)
            draws = dist.sample(rng, int(population[alive].sum()))
            owners = np.repeat(alive, population[alive])
            children = np.bincount(owners, weights=draws, minlength=width).astype(np.int64)
            population = children
            size += children
            height[children > 0] = generation
            over = size > size_cap
            if over.any():
                population[over] = 0
        overflow = size > size_cap
        size[overflow] = -1
        height[overflow] = -1
        sizes[start:stop] = size
        heights[start:stop] = height
    return sizes, heights


# -- size-conditioned trees ------------------------------------------------------

def tree_from_bridge(steps: np.ndarray) -> PlaneTree:
    """Vervaat transform of a bridge ending at -1, decoded as a tree."""
    return PlaneTree(vervaat(steps) + 1)


@dataclass
class ConditionedSampler:
    """Reusable exact sampler of GW trees conditioned to have n vertices"""
    dist: OffspringDistribution
    n: int
    method: str = 'auto'
    rejection_max_n: int = DEFAULT_REJECTION_MAX_N
    rejection_max_tries: int = DEFAULT_REJECTION_MAX_TRIES
    eps_trunc: float = DEFAULT_EPS_TRUNC
    use_fft: bool = False
    table_mode: str = 'dyadic'
    leaf_size: int = DEFAULT_LEAF_SIZE
    memory_budget_mb: float = DEFAULT_MEMORY_BUDGET_MB
    cache_dir: Optional[Path] = None
    table: Optional[BridgeTable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"Unknown method '{self.method}', expected one of {METHODS}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        self.step = step_law(self.dist)
        if self.method == 'auto':
            self.resolved = 'rejection' if self.n <= self.rejection_max_n else 'exact-bridge'
        else:
            self.resolved = self.method
        if self.resolved == 'exact-bridge' and self.table is None:
            self.table = bridge_table(
                self.step, self.n, eps_trunc=self.eps_trunc, use_fft=self.use_fft,
                mode=self.table_mode, leaf_size=self.leaf_size,
                memory_budget_mb=self.memory_budget_mb, cache_dir=self.cache_dir,
            )

    def sample_steps(self, rng: np.random.Generator) -> np.ndarray:
        if self.resolved == 'rejection':
            return rejection_bridge(self.step, self.n, rng, self.rejection_max_tries)
        return sample_bridge(self.table, rng)

    def sample(self, rng: np.random.Generator) -> PlaneTree:
        return tree_from_bridge(self.sample_steps(rng))

    def sample_many(self, rng: np.random.Generator, count: int) -> List[PlaneTree]:
        start = time.time()
        trees = [self.sample(rng) for _ in range(count)]
        logger.debug(f"Sampled {count} trees of size {self.n} by {self.resolved} in {time.time() - start:.2f}s")
        return trees


def sample_conditioned(dist: OffspringDistribution, n: int, rng: np.random.Generator,
                       method: str = 'auto', **options) -> PlaneTree:
    """One tree with law P_mu( . | |tau| = n).

    Raises:
        RejectionExhausted: the rejection method ran out of tries.
        ConsistencyError: n is infeasible for the bridge method.
    """
    return ConditionedSampler(dist, n, method, **options).sample(rng)


# -- approximate condensation sampler ----------------------------------------------

def _forest_then_leaves(dist: OffspringDistribution, budget: int,
                        rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """Degrees of i.i.d. GW trees filling `budget` vertices and the number of trees.

    The unfinished last tree is replaced by leaves, one tree each.
    """
    if budget == 0:
        return np.zeros(0, dtype=np.int64), 0
    degrees = dist.sample(rng, budget)
    path = np.cumsum(degrees - 1)
    lowest = int(path.min())
    if lowest >= 0:
        return np.zeros(budget, dtype=np.int64), budget
    complete_end = int(np.argmax(path == lowest)) + 1
    out = degrees.copy()
    out[complete_end:] = 0
    return out, -lowest + (budget - complete_end)


def _spine_pieces(dist: OffspringDistribution, rng: np.random.Generator, spine_length: int,
                  budget: int):
    """Side branches of the non-top spine vertices as (left trees, right trees, degree)."""
    biased = size_biased(dist)
    pieces = []
    used = spine_length
    for _ in range(spine_length - 1):
        degree = biased.sample(rng)
        if degree - 1 > budget:
            return None
        left = int(rng.integers(0, degree))
        sides = []
        for _ in range(degree - 1):
            try:
                tree = sample_gw(dist, rng, size_cap=budget - used)
            except SizeCapExceeded:
                return None
            used += tree.size
            sides.append(tree.degrees)
            if used > budget:
                return None
        pieces.append((sides[:left], sides[left:], degree))
    return pieces, used


def sample_condensation_approx(dist: OffspringDistribution, n: int, rng: np.random.Generator,
                               max_retries: int = 1000) -> PlaneTree:
    """Approximate draw of the conditioned tree for large n.

    A geometric spine with size-biased side branching ends at the condensation
    vertex, whose children are i.i.d. GW trees filling the remaining budget;
    its degree is set last so the tree has exactly n vertices.

    Raises:
        RejectionExhausted: the spine and its branches overshot n max_retries times.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    m = dist.mean_m
    for attempt in range(1, max_retries + 1):
        spine_length = int(rng.geometric(1.0 - m))
        if spine_length > n:
            continue
        built = _spine_pieces(dist, rng, spine_length, n)
        if built is None:
            continue
        pieces, used = built
        budget = n - used
        top_forest, top_degree = _forest_then_leaves(dist, budget, rng)

        # assemble in lexicographic order from the top of the spine down
        block = np.concatenate(([top_degree], top_forest)).astype(np.int64)
        for left, right, degree in reversed(pieces):
            parts = [np.array([degree], dtype=np.int64)] + list(left) + [block] + list(right)
            block = np.concatenate(parts)
        if attempt > 1:
            logger.debug(f"Condensation sampler needed {attempt} attempts at n={n}")
        tree = PlaneTree(block)
        if tree.size != n:
            raise ConsistencyError(f"Condensation sampler produced {tree.size} vertices, expected {n}")
        return tree
    raise RejectionExhausted(n, max_retries)


# -- local limit T^ -----------------------------------------------------------------

@dataclass
class TruncatedSpineTree:
    """Finite window of T^ with the truncation it was drawn under"""
    tree: PlaneTree
    spine_length: int
    spine_indices: List[int]
    splits: List[Tuple[int, int]]
    depth_cap: int
    width_cap: int
    depth_truncated: bool = False
    width_truncated: bool = False

    @property
    def top_index(self) -> int:
        return self.spine_indices[-1]

    def metadata(self) -> dict:
        return {
            'spine_length': self.spine_length,
            'depth_cap': self.depth_cap,
            'width_cap': self.width_cap,
            'depth_truncated': self.depth_truncated,
            'width_truncated': self.width_truncated,
            'vertices': self.tree.size,
        }


def _truncated_gw(dist: OffspringDistribution, rng: np.random.Generator, depth_cap: int) -> Tuple[List[int], bool]:
    """Preorder degrees of a GW tree cut at depth_cap below its root."""
    degrees: List[int] = []
    cut = False
    stack = [1]
    depth_stack = [0]
    while stack:
        if stack[-1] == 0:
            stack.pop()
            depth_stack.pop()
            continue
        stack[-1] -= 1
        depth = depth_stack[-1]
        d = dist.sample(rng)
        if depth >= depth_cap and d > 0:
            cut = True
            d = 0
        degrees.append(d)
        if d:
            stack.append(d)
            depth_stack.append(depth + 1)
    return degrees, cut


def sample_that_truncated(dist: OffspringDistribution, depth_cap: int, width_cap: int,
                          rng: np.random.Generator) -> TruncatedSpineTree:
    """Draw T^ restricted to width_cap branches per side and depth_cap per branch.

    Spine length S has P(S = i) = (1 - m) m^(i - 1); each non-top spine
    vertex has zeta* - 1 side branches split uniformly into left and right;
    the top vertex carries width_cap branches.
    """
    if depth_cap < 1 or width_cap < 1:
        raise ValidationError("depth_cap and width_cap must be >= 1")
    biased = size_biased(dist)
    spine_length = int(rng.geometric(1.0 - dist.mean_m))
    depth_truncated = False
    width_truncated = False

    splits = []
    sides = []
    for _ in range(spine_length - 1):
        k = biased.sample(rng) - 1
        left = int(rng.integers(0, k + 1))
        splits.append((k, left))
        n_left, n_right = min(left, width_cap), min(k - left, width_cap)
        width_truncated |= (n_left < left) or (n_right < k - left)
        left_trees, right_trees = [], []
        for bucket, count in ((left_trees, n_left), (right_trees, n_right)):
            for _ in range(count):
                degrees, cut = _truncated_gw(dist, rng, depth_cap)
                depth_truncated |= cut
                bucket.append(degrees)
        sides.append((left_trees, right_trees, n_left + n_right + 1))

    top = [width_cap]
    for _ in range(width_cap):
        degrees, cut = _truncated_gw(dist, rng, depth_cap)
        depth_truncated |= cut
        top.extend(degrees)

    block: List[int] = top
    spine_offsets = [0]
    for left_trees, right_trees, degree in reversed(sides):
        left_flat = [d for t in left_trees for d in t]
        right_flat = [d for t in right_trees for d in t]
        offset = 1 + len(left_flat)
        spine_offsets = [0] + [o + offset for o in spine_offsets]
        block = [degree] + left_flat + block + right_flat

    return TruncatedSpineTree(
        tree=PlaneTree(block),
        spine_length=spine_length,
        spine_indices=spine_offsets,
        splits=splits,
        depth_cap=depth_cap,
        width_cap=width_cap,
        depth_truncated=depth_truncated,
        width_truncated=width_truncated,
    )
