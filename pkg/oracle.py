#!/usr/bin/env python3
"""
Exhaustive enumeration of plane trees for exact small-n laws.

Trees are produced as degree sequences in lexicographic order, each with its
Galton-Watson weight w(tau) = prod_u mu_{k_u}. Summing the weights of the
trees of size n gives P(|tau| = n); normalising by that sum gives the law
conditioned on the size.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Any

import numpy as np

from errors import OutOfRangeError, UnknownStatisticError
from offspring import OffspringDistribution
from tree import PlaneTree, TreeStats, height_function, stats

logger = logging.getLogger('condensation_lab.oracle')

MIN_N = 1
MAX_N = 14

Extractor = Callable[[PlaneTree, TreeStats], Any]


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def _check_range(n: int) -> None:
    if not MIN_N <= n <= MAX_N:
        raise OutOfRangeError(f"Enumeration supports {MIN_N} <= n <= {MAX_N}, got n={n}")


def enumerate_degree_sequences(n: int) -> Iterator[Tuple[int, ...]]:
    """All valid degree sequences of length n in lexicographic order."""
    _check_range(n)
    prefix: List[int] = []

    def extend(walk: int) -> Iterator[Tuple[int, ...]]:
        i = len(prefix)
        if i == n - 1:
            # the last vertex is a leaf and closes the walk at -1
            if walk == 0:
                yield tuple(prefix) + (0,)
            return
        remaining = n - i - 1
        for d in range(max(0, 1 - walk), remaining - walk + 1):
            prefix.append(d)
            yield from extend(walk + d - 1)
            prefix.pop()

    yield from extend(0)


def enumerate_trees(n: int) -> Iterator[PlaneTree]:
    """Every plane tree with n vertices exactly once; Catalan(n - 1) of them.

    Raises:
        OutOfRangeError: unless 1 <= n <= 14.
    """
    for degrees in enumerate_degree_sequences(n):
        yield PlaneTree(degrees, validate=False)


def tree_weight(degrees, mu: np.ndarray) -> float:
    return math.prod(float(mu[d]) for d in degrees)


# -- statistics ----------------------------------------------------------------

def _subtree_pair(tree: PlaneTree, st: TreeStats) -> Optional[Tuple[int, int]]:
    if st.delta < 2:
        return None
    return int(st.xi[0]), int(st.xi[1])


BASE_STATISTICS: Dict[str, Extractor] = {
    'delta': lambda t, s: s.delta,
    'second_degree': lambda t, s: s.second_degree,
    'u_index': lambda t, s: s.u_star_index,
    'u_generation': lambda t, s: s.u_star_generation,
    'height': lambda t, s: s.height,
    'xi_max': lambda t, s: s.xi_max,
    'pivot_I': lambda t, s: s.pivot_I,
    'root_degree': lambda t, s: int(t.degrees[0]),
    'subtree_pair': _subtree_pair,
}


def _parametric(name: str) -> Optional[Extractor]:
    """H:i is the height function at i, Z:j the partial sum Z_min(j, Delta)."""
    head, _, arg = name.partition(':')
    if not arg:
        return None
    try:
        index = int(arg)
    except ValueError:
        return None
    if head == 'H':
        return lambda t, s: int(height_function(t)[index]) if index <= t.size else None
    if head == 'Z':
        return lambda t, s: int(s.z_partial[min(index, s.delta) - 1]) if s.delta and index >= 1 else 0
    return None


def get_extractor(statistic: str) -> Extractor:
    """Resolve a statistic name; comma-separated names give joint tuples.

    Raises:
        UnknownStatisticError: for names outside BASE_STATISTICS, H:i and Z:j.
    """
    parts = [p.strip() for p in statistic.split(',') if p.strip()]
    if not parts:
        raise UnknownStatisticError("Empty statistic name")
    extractors = []
    for part in parts:
        extractor = BASE_STATISTICS.get(part) or _parametric(part)
        if extractor is None:
            known = sorted(BASE_STATISTICS) + ['H:<i>', 'Z:<j>']
            raise UnknownStatisticError(f"Unknown statistic '{part}'. Known: {known}")
        extractors.append(extractor)
    if len(extractors) == 1:
        return extractors[0]

    def joint(t: PlaneTree, s: TreeStats):
        values = tuple(e(t, s) for e in extractors)
        return None if any(v is None for v in values) else values

    return joint


@dataclass
class ExactLaw:
    """Conditional pmf of one statistic given |tau| = n"""
    statistic: str
    n: int
    pmf: Dict[Any, float]
    size_probability: float

    def prob(self, value) -> float:
        return self.pmf.get(value, 0.0)

    def mean(self) -> float:
        return math.fsum(float(v) * p for v, p in self.pmf.items())

    def support(self) -> list:
        return sorted(self.pmf)


def exact_conditional_law(dist: OffspringDistribution, n: int, statistic: str) -> ExactLaw:
    """Law of a named statistic under P_mu( . | |tau| = n).

    Trees where the statistic is undefined (e.g. subtree_pair with Delta < 2)
    are dropped and the law is conditioned on it being defined.
    """
    _check_range(n)
    extractor = get_extractor(statistic)
    mu = np.asarray(dist.pmf(np.arange(n)))
    buckets: Dict[Any, List[float]] = defaultdict(list)
    all_weights: List[float] = []
    for degrees in enumerate_degree_sequences(n):
        w = tree_weight(degrees, mu)
        all_weights.append(w)
        tree = PlaneTree(degrees, validate=False)
        value = extractor(tree, stats(tree))
        if value is not None:
            buckets[value].append(w)

    size_prob = math.fsum(all_weights)
    totals = {value: math.fsum(ws) for value, ws in buckets.items()}
    defined = math.fsum(totals.values())
    if defined <= 0:
        raise UnknownStatisticError(f"Statistic '{statistic}' is undefined on every tree of size {n}")
    pmf = {value: total / defined for value, total in sorted(totals.items())}
    logger.debug(f"Exact law of {statistic} at n={n}: {len(pmf)} atoms, P(|tau|=n)={size_prob:.6e}")
    return ExactLaw(statistic=statistic, n=n, pmf=pmf, size_probability=size_prob)


def size_probability(dist: OffspringDistribution, n: int) -> float:
    """P(|tau| = n) as the sum of the weights of all size-n trees."""
    mu = np.asarray(dist.pmf(np.arange(n)))
    return math.fsum(tree_weight(d, mu) for d in enumerate_degree_sequences(n))


def exact_tree_law(dist: OffspringDistribution, n: int) -> Dict[Tuple[int, ...], float]:
    """Probability of every size-n tree (keyed by degree sequence) given |tau| = n."""
    mu = np.asarray(dist.pmf(np.arange(n)))
    weights = {d: tree_weight(d, mu) for d in enumerate_degree_sequences(n)}
    total = math.fsum(weights.values())
    return {d: w / total for d, w in weights.items()}
