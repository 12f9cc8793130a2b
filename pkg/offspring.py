#!/usr/bin/env python3
"""
Offspring distributions with a power-law tail.

An OffspringDistribution stores the law mu of the number of children in a
subcritical Galton-Watson tree:

    mu_k = c * h(k) / k^(1 + theta)        for k >= 1
    mu_0 = 1 - sum_{k>=1} mu_k

where h(k) = 1 + a / ln(e + k) is the slowly varying correction (a = 0 gives
the constant case). Probabilities are held densely on 0..kmax and evaluated
analytically beyond, with tail sums closed through the Hurwitz zeta function.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Any, Optional, Union

import numpy as np
from scipy import integrate, special

from errors import ConfigurationError, UnsupportedCaseError

logger = logging.getLogger('condensation_lab.offspring')

DEFAULT_KMAX = 10**6
# integer upper bound for tail inversion; keeps values inside int64
MAX_TAIL_VALUE = 2**62


def hurwitz_tail(s: float, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """sum_{k >= x} k^(-s) for integer x >= 1 and s > 1."""
    return special.zeta(s, x)


class AliasTable:
    """Vose alias table for O(1) draws from a finite law on 0..len(probs)-1"""

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=np.float64)
        size = len(probs)
        scaled = probs * size / probs.sum()
        self.prob = np.ones(size)
        self.alias = np.arange(size)

        small = [i for i in range(size) if scaled[i] < 1.0]
        large = [i for i in range(size) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for i in large + small:
            self.prob[i] = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        column = rng.integers(0, len(self.prob), size=size)
        coin = rng.random(size)
        return np.where(coin < self.prob[column], column, self.alias[column])


@dataclass(frozen=True)
class StepLaw:
    """Step distribution nu(k) = mu(k + 1) on {-1, 0, 1, ...}"""
    dist: 'OffspringDistribution'
    mean: float

    def pmf(self, s: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        return self.dist.pmf(np.asarray(s) + 1)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        draws = self.dist.sample(rng, size)
        return draws - 1


@dataclass(frozen=True)
class SizeBiasedLaw:
    """Size-biased law P(zeta* = k) = k mu_k / m on k >= 1"""
    dist: 'OffspringDistribution'
    head: np.ndarray = field(repr=False)
    tail_mass: float

    def pmf(self, k: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        k = np.asarray(k)
        return np.where(k >= 1, k * self.dist.pmf(k) / self.dist.mean_m, 0.0)

    @property
    def total(self) -> float:
        return float(math.fsum(self.head) + self.tail_mass)

    def mean(self) -> float:
        """E[zeta*] = E[k^2] / m, infinite when the offspring variance is."""
        if not self.dist.finite_variance:
            return math.inf
        return self.dist.second_moment / self.dist.mean_m

    @cached_property
    def _alias(self) -> AliasTable:
        return AliasTable(np.append(self.head, self.tail_mass))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        count = 1 if size is None else size
        draws = self._alias.sample(rng, count).astype(np.int64)
        in_tail = draws == len(self.head)
        if in_tail.any():
            # k mu_k ~ k^(-theta) beyond kmax
            draws[in_tail] = self.dist._sample_tail(
                rng, int(in_tail.sum()), self.dist.theta
            )
        return int(draws[0]) if size is None else draws


class OffspringDistribution:
    """Subcritical offspring law with a regularly varying tail of index theta"""

    def __init__(self, theta: float, target_mean: float, kmax: int = DEFAULT_KMAX,
                 slowly_varying_a: float = 0.0):
        if theta <= 1:
            raise ConfigurationError(f"theta must be > 1, got {theta}")
        if not 0 < target_mean < 1:
            raise ConfigurationError(f"mean must lie in (0, 1), got {target_mean}")
        if kmax < 2:
            raise ConfigurationError(f"kmax must be at least 2, got {kmax}")
        if 1 + slowly_varying_a <= 0:
            raise ConfigurationError(
                f"slowly varying correction must stay positive (a > -1), got a={slowly_varying_a}"
            )

        self.theta = float(theta)
        self.kmax = int(kmax)
        self.a = float(slowly_varying_a)

        ks = np.arange(1, self.kmax + 1, dtype=np.float64)
        shape = self._h(ks) * ks ** (-1.0 - self.theta)

        mean_series = math.fsum(shape * ks) + self._shape_tail(self.theta, self.kmax + 1)
        mass_series = math.fsum(shape) + self._shape_tail(1.0 + self.theta, self.kmax + 1)

        self.c = target_mean / mean_series
        mu0 = 1.0 - self.c * mass_series
        if mu0 <= 0:
            raise ConfigurationError(
                f"Infeasible target mean {target_mean} for theta={theta}: mu_0 = {mu0:.3e} <= 0"
            )

        self.probs = np.empty(self.kmax + 1)
        self.probs[0] = mu0
        self.probs[1:] = self.c * shape
        self.tail_after = self.c * self._shape_tail(1.0 + self.theta, self.kmax + 1)

        self.mean_m = float(target_mean)
        self.gamma = 1.0 - self.mean_m

        self.finite_variance = self.theta > 2
        if self.finite_variance:
            self.second_moment = self.c * (
                math.fsum(shape * ks * ks) + self._shape_tail(self.theta - 1.0, self.kmax + 1)
            )
            self.variance = self.second_moment - self.mean_m ** 2
        else:
            self.second_moment = math.inf
            self.variance = math.inf

        # tail_sums[x] = mu([x, inf)) for x = 0..kmax+1
        suffix = np.cumsum(self.probs[::-1])[::-1]
        self.tail_sums = np.append(suffix + self.tail_after, self.tail_after)

        logger.debug(
            f"Built offspring law theta={self.theta} m={self.mean_m} kmax={self.kmax} "
            f"c={self.c:.6g} mu0={mu0:.6g}"
        )

    # -- analytic pieces -------------------------------------------------

    def _h(self, k):
        if self.a == 0.0:
            return np.ones_like(k, dtype=np.float64) if isinstance(k, np.ndarray) else 1.0
        return 1.0 + self.a / np.log(np.e + k)

    def _shape_tail(self, s: float, start: int) -> float:
        """sum_{k >= start} h(k) k^(-s)"""
        if self.a == 0.0:
            return float(hurwitz_tail(s, start))
        # midpoint Euler-Maclaurin: sum_{k>=start} f(k) ~ int_{start-1/2}^inf f
        value, _ = integrate.quad(
            lambda x: (1.0 + self.a / math.log(math.e + x)) * x ** (-s),
            start - 0.5, np.inf, limit=200,
        )
        return value

    def slowly_varying(self, k):
        """L(k) = c * h(k)"""
        return self.c * self._h(np.asarray(k, dtype=np.float64))

    # -- public evaluators -----------------------------------------------

    def pmf(self, k):
        """mu_k for scalar or array k (zero for negative k)."""
        k = np.asarray(k, dtype=np.int64)
        scalar = k.ndim == 0
        k = np.atleast_1d(k)
        out = np.zeros(k.shape)
        head = (k >= 0) & (k <= self.kmax)
        out[head] = self.probs[k[head]]
        beyond = k > self.kmax
        if beyond.any():
            kb = k[beyond].astype(np.float64)
            out[beyond] = self.c * self._h(kb) * kb ** (-1.0 - self.theta)
        return float(out[0]) if scalar else out

    def tail(self, x: int) -> float:
        """mu([x, inf))"""
        x = int(x)
        if x <= 0:
            return 1.0
        if x <= self.kmax + 1:
            return float(self.tail_sums[x])
        return self.c * self._shape_tail(1.0 + self.theta, x)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def spec_dict(self) -> Dict[str, Any]:
        spec: Dict[str, Any] = {"theta": self.theta, "mean": self.mean_m, "kmax": self.kmax}
        if self.a != 0.0:
            spec["slowly_varying"] = {"a": self.a}
        return spec

    def spec_hash(self) -> str:
        payload = json.dumps(self.spec_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # -- sampling ----------------------------------------------------------

    @cached_property
    def _alias(self) -> AliasTable:
        logger.debug(f"Building alias table over {self.kmax + 2} atoms")
        return AliasTable(np.append(self.probs, self.tail_after))

    def _sample_tail(self, rng: np.random.Generator, size: int, s: float) -> np.ndarray:
        """Draw k > kmax with P(k) proportional to h(k) k^(-s)."""
        lo = self.kmax + 1
        out = np.empty(size, dtype=np.int64)
        filled = 0
        h_max = max(float(self._h(float(lo))), 1.0)
        while filled < size:
            need = size - filled
            proposal = _invert_power_tail(rng, need, s, lo)
            if self.a != 0.0:
                keep = rng.random(need) * h_max < self._h(proposal.astype(np.float64))
                proposal = proposal[keep]
            out[filled:filled + len(proposal)] = proposal
            filled += len(proposal)
        return out

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """Draw offspring counts; a scalar when size is None."""
        count = 1 if size is None else size
        draws = self._alias.sample(rng, count).astype(np.int64)
        in_tail = draws == self.kmax + 1
        if in_tail.any():
            draws[in_tail] = self._sample_tail(rng, int(in_tail.sum()), 1.0 + self.theta)
        return int(draws[0]) if size is None else draws

    def __repr__(self) -> str:
        return (f"OffspringDistribution(theta={self.theta}, mean={self.mean_m}, "
                f"kmax={self.kmax}, a={self.a})")


def _invert_power_tail(rng: np.random.Generator, size: int, s: float, lo: int) -> np.ndarray:
    """Inverse-cdf draws of k >= lo with P(k) proportional to k^(-s).

    Uses a vectorised integer bisection on the Hurwitz zeta tail.
    """
    total = hurwitz_tail(s, lo)
    target = rng.random(size) * total
    # smallest k with tail(k + 1) <= target
    lo_arr = np.full(size, lo, dtype=np.float64)
    # tail(k) ~ k^(1-s)/(s-1)
    guess = np.maximum(((s - 1.0) * np.maximum(target, 1e-300)) ** (-1.0 / (s - 1.0)), lo)
    hi_arr = np.minimum(np.ceil(4.0 * guess + lo), float(MAX_TAIL_VALUE))
    while True:
        short = (hurwitz_tail(s, hi_arr + 1) > target) & (hi_arr < MAX_TAIL_VALUE)
        if not short.any():
            break
        hi_arr[short] = np.minimum(hi_arr[short] * 2.0, float(MAX_TAIL_VALUE))
    while True:
        open_ = hi_arr - lo_arr > 0
        if not open_.any():
            break
        mid = np.floor((lo_arr + hi_arr) / 2.0)
        ok = hurwitz_tail(s, mid + 1) <= target
        hi_arr = np.where(open_ & ok, mid, hi_arr)
        lo_arr = np.where(open_ & ~ok, mid + 1, lo_arr)
    return hi_arr.astype(np.int64)


def build_heavy_tail(theta: float, target_mean: float, kmax: int = DEFAULT_KMAX,
                     slowly_varying_a: float = 0.0) -> OffspringDistribution:
    """Build mu_k = c h(k)/k^(1+theta) with c fixed so that the mean is target_mean.

    Raises:
        ConfigurationError: if theta <= 1, the mean is outside (0, 1) or the
            resulting mu_0 is not positive.
    """
    return OffspringDistribution(theta, target_mean, kmax, slowly_varying_a)


def from_spec(spec: Dict[str, Any]) -> OffspringDistribution:
    """Build a distribution from a config entry {theta, mean, kmax, slowly_varying}."""
    try:
        sv = spec.get("slowly_varying") or {}
        return build_heavy_tail(
            float(spec["theta"]), float(spec["mean"]),
            int(spec.get("kmax", DEFAULT_KMAX)), float(sv.get("a", 0.0)),
        )
    except KeyError as e:
        raise ConfigurationError(f"Distribution spec is missing key {e}") from e


def size_biased(dist: OffspringDistribution) -> SizeBiasedLaw:
    ks = np.arange(1, dist.kmax + 1)
    head = np.concatenate(([0.0], ks * dist.probs[1:] / dist.mean_m))
    tail_mass = dist.c * dist._shape_tail(dist.theta, dist.kmax + 1) / dist.mean_m
    return SizeBiasedLaw(dist=dist, head=head, tail_mass=tail_mass)


def sample_offspring(dist: OffspringDistribution, rng: np.random.Generator) -> int:
    return dist.sample(rng)


def step_law(dist: OffspringDistribution) -> StepLaw:
    """nu(k) = mu(k+1); the mean is summed numerically and equals -gamma."""
    ks = np.arange(dist.kmax + 1, dtype=np.float64)
    head = math.fsum((ks - 1.0) * dist.probs)
    tail = dist.c * (dist._shape_tail(dist.theta, dist.kmax + 1)
                     - dist._shape_tail(1.0 + dist.theta, dist.kmax + 1))
    return StepLaw(dist=dist, mean=head + tail)


def tail_quantile(dist: OffspringDistribution, n: int) -> int:
    """Smallest integer x with mu([x, inf)) <= 1/n."""
    level = 1.0 / n
    if dist.tail_sums[-1] <= level:
        # tail_sums is non-increasing: first index where it drops to the level
        return int(np.argmax(dist.tail_sums <= level))
    lo, hi = dist.kmax + 1, 2 * (dist.kmax + 1)
    while dist.tail(hi) > level:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if dist.tail(mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


def norming_sequence(dist: OffspringDistribution, n: int) -> float:
    """B_n: sigma*sqrt(n/2) for finite variance, the tail quantile for theta < 2.

    Raises:
        UnsupportedCaseError: for theta = 2, where the variance is infinite
            and no constructive norming is provided.
    """
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    if dist.finite_variance:
        return dist.sigma * math.sqrt(n / 2.0)
    if dist.theta == 2.0:
        raise UnsupportedCaseError(
            "theta = 2 with infinite variance has no norming recipe; use theta != 2"
        )
    return float(tail_quantile(dist, n))


def stable_norming(dist: OffspringDistribution, n: int) -> float:
    """Scale under which the centred walk converges to Y_1 with E exp(-l Y_1) = exp(l^theta).

    Equal to norming_sequence for finite variance; for theta < 2 the tail
    quantile is multiplied by |Gamma(1 - theta)|^(1/theta).
    """
    base = norming_sequence(dist, n)
    if dist.finite_variance:
        return base
    return base * abs(math.gamma(1.0 - dist.theta)) ** (1.0 / dist.theta)
