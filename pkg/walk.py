#!/usr/bin/env python3
"""
Random-walk machinery: Vervaat transform, exchange operator, exact bridge
tables, bridge sampling and Kemperman's formula.

The walk has i.i.d. steps X with law nu(k) = mu(k + 1) on {-1, 0, 1, ...}.
A BridgeTable stores q_L(s) = P(W_L = s) on the window s in [-L, n - 1 - L],
which contains every value a walk can visit on its way to W_n = -1, so
conditioning on W_n = -1 never needs the mass outside the window.
"""

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from errors import ConsistencyError, RejectionExhausted, ResourceError, ValidationError
from offspring import OffspringDistribution, StepLaw, step_law

logger = logging.getLogger('condensation_lab.walk')

DEFAULT_EPS_TRUNC = 1e-12
DEFAULT_LEAF_SIZE = 16
DEFAULT_LEAF_ACCEPT = 0.05
DEFAULT_MEMORY_BUDGET_MB = 512
TABLE_MODES = ('dyadic', 'full')


# -- sequence transforms --------------------------------------------------

def vervaat(x: Sequence[int]) -> np.ndarray:
    """Cyclic shift of x starting just after the first argmin of its partial sums."""
    x = np.asarray(x)
    if len(x) == 0:
        raise ValidationError("Vervaat transform needs a nonempty sequence")
    i_star = int(np.argmin(np.cumsum(x))) + 1
    return np.concatenate((x[i_star:], x[:i_star]))


def exchange_T(x: Sequence[float]) -> np.ndarray:
    """Swap the last entry with the first maximal entry."""
    x = np.asarray(x)
    if len(x) == 0:
        raise ValidationError("Exchange operator needs a nonempty sequence")
    k = int(np.argmax(x))
    y = x.copy()
    y[k], y[-1] = x[-1], x[k]
    return y


# -- bridge tables ----------------------------------------------------------

def halving_closure(n: int) -> set:
    """All lengths reached from n by L -> (L // 2, L - L // 2)."""
    lengths = set()
    todo = [n]
    while todo:
        length = todo.pop()
        if length in lengths:
            continue
        lengths.add(length)
        if length > 1:
            todo.extend((length // 2, length - length // 2))
    return lengths


def _convolve(a: np.ndarray, b: np.ndarray, size: int, use_fft: bool) -> np.ndarray:
    if use_fft:
        out = signal.fftconvolve(a, b)[:size]
        return np.clip(out, 0.0, None)
    return np.convolve(a, b)[:size]


@dataclass
class BridgeTable:
    """Laws q_L(s) = P(W_L = s) on the windows s in [-L, n - 1 - L]"""
    n: int
    step: StepLaw
    levels: Dict[int, np.ndarray] = field(repr=False)
    eps_trunc: float = DEFAULT_EPS_TRUNC
    use_fft: bool = False
    mode: str = 'dyadic'
    leaf_size: int = DEFAULT_LEAF_SIZE
    leaf_accept: float = DEFAULT_LEAF_ACCEPT

    def window(self, length: int) -> Tuple[int, int]:
        return -length, self.n - 1 - length

    def level(self, length: int) -> np.ndarray:
        try:
            return self.levels[length]
        except KeyError:
            raise ConsistencyError(f"Bridge table for n={self.n} holds no level {length}") from None

    def pmf(self, length: int, s: int) -> float:
        """q_length(s); zero below the window."""
        if length == 0:
            return 1.0 if s == 0 else 0.0
        low, high = self.window(length)
        if s < low:
            return 0.0
        if s > high:
            raise ConsistencyError(f"s={s} above the window of level {length} (max {high})")
        return float(self.level(length)[s - low])

    def level_mass(self, length: int) -> float:
        """Mass of level `length` inside its window."""
        return math.fsum(self.level(length))

    @property
    def bridge_probability(self) -> float:
        """q_n(-1) = P(W_n = -1)"""
        return self.pmf(self.n, -1)

    @property
    def nbytes(self) -> int:
        return sum(v.nbytes for v in self.levels.values())


def _required_lengths(n: int, mode: str, leaf_size: int) -> list:
    if mode == 'full':
        return list(range(1, n + 1))
    lengths = halving_closure(n) | set(range(1, min(leaf_size, n) + 1))
    return sorted(lengths)


def _cache_path(cache_dir: Path, dist: OffspringDistribution, n: int, eps: float,
                use_fft: bool, mode: str, leaf_size: int) -> Path:
    key = f"{dist.spec_hash()}|{n}|{eps!r}|{use_fft}|{mode}|{leaf_size}"
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    return cache_dir / f"bridge_{n}_{digest}.npz"


def bridge_table(step: StepLaw, n: int, eps_trunc: float = DEFAULT_EPS_TRUNC,
                 use_fft: bool = False, mode: str = 'dyadic',
                 leaf_size: int = DEFAULT_LEAF_SIZE,
                 memory_budget_mb: float = DEFAULT_MEMORY_BUDGET_MB,
                 cache_dir: Optional[Path] = None,
                 leaf_accept: float = DEFAULT_LEAF_ACCEPT) -> BridgeTable:
    """Build q_L for the lengths the sampler needs by iterated convolution.

    mode='full' stores every level 1..n (sequential sampling); 'dyadic'
    stores the halving closure of n plus all levels up to leaf_size.

    Raises:
        ResourceError: when the table would exceed memory_budget_mb.
    """
    if n < 1:
        raise ValidationError(f"Bridge length must be >= 1, got {n}")
    if mode not in TABLE_MODES:
        raise ValidationError(f"Unknown table mode '{mode}', expected one of {TABLE_MODES}")
    if step.mean >= 0:
        raise ValidationError(f"Step law must have negative mean, got {step.mean}")

    lengths = _required_lengths(n, mode, leaf_size)
    needed_mb = len(lengths) * n * 8 / (1024 * 1024)
    if needed_mb > memory_budget_mb:
        advice = ("use mode='dyadic'" if mode == 'full'
                  else "lower n or raise sampling.memory_budget_mb in config.json")
        raise ResourceError(
            f"Bridge table for n={n} ({mode}) needs {needed_mb:.0f} MB, budget is "
            f"{memory_budget_mb:.0f} MB; {advice}"
        )

    dist = step.dist
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        path = _cache_path(cache_dir, dist, n, eps_trunc, use_fft, mode, leaf_size)
        if path.exists():
            try:
                with np.load(path) as data:
                    levels = {int(L): data[f"q{L}"] for L in data["lengths"]}
                logger.info(f"Loaded bridge table n={n} from cache {path.name}")
                return BridgeTable(n, step, levels, eps_trunc, use_fft, mode, leaf_size, leaf_accept)
            except (OSError, KeyError, ValueError) as e:
                logger.warning(f"Ignoring unreadable bridge cache {path}: {e}")

    start = time.time()
    levels: Dict[int, np.ndarray] = {1: np.asarray(dist.pmf(np.arange(n)), dtype=np.float64)}
    for length in lengths:
        if length == 1:
            continue
        if mode == 'full':
            a, b = length - 1, 1
        else:
            a, b = length // 2, length - length // 2
        levels[length] = _convolve(levels[a], levels[b], n, use_fft)
        logger.debug(f"Level {length} built from {a}+{b}, window mass {levels[length].sum():.6g}")

    elapsed = time.time() - start
    logger.info(f"Built {mode} bridge table n={n} with {len(levels)} levels in {elapsed:.2f}s")

    table = BridgeTable(n, step, levels, eps_trunc, use_fft, mode, leaf_size, leaf_accept)
    if table.bridge_probability <= 0:
        raise ConsistencyError(f"P(W_{n} = -1) underflows to zero; n={n} is infeasible")

    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        np.savez(path, lengths=np.array(sorted(levels)), **{f"q{L}": v for L, v in levels.items()})
        logger.debug(f"Saved bridge table to {path}")
    return table


# -- sizes ----------------------------------------------------------------------

def kemperman_size_pmf(dist: OffspringDistribution, n: int,
                       table: Optional[BridgeTable] = None) -> float:
    """P(|tau| = n) = P(W_n = -1) / n."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if table is None or table.n != n:
        table = bridge_table(step_law(dist), n)
    return table.bridge_probability / n


def size_pmf(dist: OffspringDistribution, n_max: int, use_fft: Optional[bool] = None) -> np.ndarray:
    """P(|tau| = j) for j = 0..n_max (entry 0 is zero), from one convolution pass."""
    if use_fft is None:
        use_fft = n_max > 512
    nu = np.asarray(dist.pmf(np.arange(n_max)), dtype=np.float64)
    out = np.zeros(n_max + 1)
    # current holds P(W_j = s) for s in [-j, n_max - 1 - j]
    current = nu.copy()
    out[1] = current[0]
    for j in range(2, n_max + 1):
        current = _convolve(current, nu, n_max, use_fft)
        out[j] = current[j - 1] / j
    return out


# -- bridge sampling -------------------------------------------------------------

def _draw_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    total = weights.sum()
    if not total > 0:
        raise ConsistencyError("Zero total weight while sampling a bridge increment")
    cumulative = np.cumsum(weights)
    return int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side='right'))


def _sample_sequential(table: BridgeTable, rng: np.random.Generator) -> np.ndarray:
    n = table.n
    out = np.empty(n, dtype=np.int64)
    nu = table.level(1)
    walk = 0
    for k in range(1, n + 1):
        target = -1 - walk
        remaining = n - k
        # x ranges over -1..target + remaining
        width = target + remaining + 2
        if remaining == 0:
            out[k - 1] = target
            break
        rest = table.level(remaining)
        # rest index of (target - x) is target - x + remaining
        weights = nu[:width] * rest[:width][::-1]
        x = _draw_index(weights, rng) - 1
        out[k - 1] = x
        walk += x
    return out


def _leaf_by_rejection(table: BridgeTable, length: int, target: int, p: float,
                       rng: np.random.Generator) -> np.ndarray:
    batch = int(math.ceil(4.0 / p))
    while True:
        proposals = table.step.sample(rng, batch * length).reshape(batch, length)
        hits = np.flatnonzero(proposals.sum(axis=1) == target)
        if len(hits):
            return proposals[hits[0]]


def _sample_dyadic(table: BridgeTable, rng: np.random.Generator) -> np.ndarray:
    n = table.n
    out = np.empty(n, dtype=np.int64)
    stack = [(0, n, -1)]
    while stack:
        start, length, target = stack.pop()
        if length == 1:
            out[start] = target
            continue
        if length <= table.leaf_size:
            p = table.pmf(length, target)
            if p >= table.leaf_accept:
                out[start:start + length] = _leaf_by_rejection(table, length, target, p, rng)
                continue
        a = length // 2
        b = length - a
        width = target + length + 1
        # s runs over -a..target + b
        weights = table.level(a)[:width] * table.level(b)[:width][::-1]
        s = _draw_index(weights, rng) - a
        stack.append((start + a, b, target - s))
        stack.append((start, a, s))
    return out


def sample_bridge(table: BridgeTable, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of (X_1..X_n) given W_n = -1.

    Full tables use the sequential formula
    P(X_k = x | W_{k-1}) = nu(x) q_{n-k}(-1 - W_{k-1} - x) / q_{n-k+1}(-1 - W_{k-1});
    dyadic tables split each block at its midpoint with weights q_a(s) q_b(t - s).

    Raises:
        ConsistencyError: on a zero denominator.
    """
    if table.bridge_probability <= 0:
        raise ConsistencyError(f"P(W_{table.n} = -1) = 0, no bridge exists")
    if table.mode == 'full':
        return _sample_sequential(table, rng)
    return _sample_dyadic(table, rng)


def rejection_bridge_batch(step: StepLaw, n: int, rng: np.random.Generator, count: int,
                           max_tries: int) -> Tuple[np.ndarray, int]:
    """Accept i.i.d. step sequences summing to -1.

    Returns (count x n array of accepted sequences, proposals used).

    Raises:
        RejectionExhausted: if max_tries proposals were not enough.
    """
    accepted = []
    tries = 0
    chunk = max(1, min(max_tries, (1 << 20) // max(n, 1)))
    while len(accepted) < count:
        if tries >= max_tries:
            raise RejectionExhausted(n, tries)
        batch = min(chunk, max_tries - tries)
        proposals = step.sample(rng, batch * n).reshape(batch, n)
        hits = np.flatnonzero(proposals.sum(axis=1) == -1)
        need = count - len(accepted)
        if len(hits) > need:
            # proposals after the last needed hit were not examined
            tries += int(hits[need - 1]) + 1
            hits = hits[:need]
        else:
            tries += batch
        accepted.extend(proposals[hits])
    return np.asarray(accepted, dtype=np.int64).reshape(count, n), tries


def rejection_bridge(step: StepLaw, n: int, rng: np.random.Generator,
                     max_tries: int = 10**7) -> np.ndarray:
    samples, _ = rejection_bridge_batch(step, n, rng, 1, max_tries)
    return samples[0]
