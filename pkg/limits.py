#!/usr/bin/env python3
"""
Closed-form limit laws the conditioned trees converge to.

Covers the geometric laws of the spine, the Frechet-type laws of the second
largest degree and of the largest subtree, the spectrally positive stable
law Y_1 with E exp(-l Y_1) = exp(l^alpha), the limit law of the location of
the condensation vertex and the height-profile marginal 1 + e_0 + e_1.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from errors import OutOfRangeError, UnsupportedCaseError
from offspring import OffspringDistribution
from walk import size_pmf

logger = logging.getLogger('condensation_lab.limits')

LANCZOS_G = 7
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_function(x: float) -> float:
    """Euler's Gamma by the Lanczos approximation, reflected below 1/2.

    Raises:
        OutOfRangeError: at the poles 0, -1, -2, ...
    """
    if x <= 0 and float(x).is_integer():
        raise OutOfRangeError(f"Gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_function(1.0 - x))
    x -= 1.0
    acc = LANCZOS_COEFFICIENTS[0]
    for i in range(1, LANCZOS_G + 2):
        acc += LANCZOS_COEFFICIENTS[i] / (x + i)
    t = x + LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


# -- laws ---------------------------------------------------------------------

@dataclass
class LimitLaw:
    """Base for the limit laws; subclasses fill in what applies"""
    tag: str = field(init=False, default='')

    def cdf(self, x):
        raise NotImplementedError

    def pmf(self, k):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if isinstance(v, (int, float, str))}


@dataclass
class PointMassLaw(LimitLaw):
    at: float = 0.0

    def __post_init__(self):
        self.tag = 'point_mass'

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.at, 1.0, 0.0)

    def sample(self, rng, size):
        return np.full(size, self.at)


@dataclass
class GeometricLaw(LimitLaw):
    """P(k) = (1 - m) m^k on k >= 0"""
    m: float = 0.5

    def __post_init__(self):
        self.tag = 'geometric'

    def pmf(self, k):
        k = np.asarray(k)
        return np.where(k >= 0, (1.0 - self.m) * self.m ** np.maximum(k, 0), 0.0)

    def cdf(self, x):
        x = np.floor(np.asarray(x, dtype=float))
        return np.where(x >= 0, 1.0 - self.m ** (x + 1), 0.0)

    def sample(self, rng, size):
        # numpy's geometric counts trials, starting at 1
        return rng.geometric(1.0 - self.m, size) - 1


@dataclass
class FrechetLaw(LimitLaw):
    """cdf exp(u^-theta / (scale^theta Gamma(1 - theta))) on u > 0"""
    theta: float = 1.5
    scale: float = 1.0

    def __post_init__(self):
        self.tag = 'frechet_theta'
        self._coefficient = 1.0 / (self.scale ** self.theta * gamma_function(1.0 - self.theta))

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide='ignore', over='ignore'):
            values = np.exp(self._coefficient * np.where(u > 0, u, np.inf) ** (-self.theta))
        return np.where(u > 0, values, 0.0)

    def sample(self, rng, size):
        # invert: u = (log(p) / coefficient)^(-1/theta)
        p = rng.random(size)
        return (np.log(p) / self._coefficient) ** (-1.0 / self.theta)


def frechet_law(theta: float, scale: float = 1.0) -> LimitLaw:
    """Limit law of D_n / B_n (scale 1) or max xi / B_n (scale gamma).

    For theta >= 2 the limit is the point mass at 0.
    """
    if theta <= 1:
        raise OutOfRangeError(f"theta must exceed 1, got {theta}")
    if theta >= 2:
        return PointMassLaw(at=0.0)
    return FrechetLaw(theta=theta, scale=scale)


def frechet_cdf(u: Union[float, np.ndarray], theta: float, scale: float = 1.0):
    """exp(u^-theta / (scale^theta Gamma(1 - theta))); the point mass at 0 for theta >= 2."""
    law = frechet_law(theta, scale)
    if isinstance(law, PointMassLaw):
        logger.debug(f"theta={theta} >= 2: returning the point mass at 0")
    values = law.cdf(u)
    return float(values) if np.ndim(values) == 0 else values


@dataclass
class StableLaw(LimitLaw):
    """Spectrally positive alpha-stable Y_1 with E exp(-l Y_1) = exp(l^alpha)"""
    alpha: float = 2.0

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise OutOfRangeError(f"alpha must lie in (1, 2], got {self.alpha}")
        self.tag = 'stable_alpha'

    def laplace(self, lam):
        return np.exp(np.asarray(lam, dtype=float) ** self.alpha)

    def sample(self, rng, size):
        return sample_stable(self.alpha, rng, size)


def sample_stable(alpha: float, rng: np.random.Generator, size: Optional[int] = None):
    """Chambers-Mallows-Stuck draw of a totally right-skewed stable variable.

    The scale |cos(pi alpha / 2)|^(1/alpha) makes E exp(-l Y) = exp(l^alpha);
    at alpha = 2 the draw reduces to 2 sin(V) sqrt(W), a Gaussian of variance 2.

    Raises:
        OutOfRangeError: unless 1 < alpha <= 2.
    """
    if not 1.0 < alpha <= 2.0:
        raise OutOfRangeError(f"alpha must lie in (1, 2], got {alpha}")
    count = 1 if size is None else size
    v = rng.uniform(-math.pi / 2, math.pi / 2, count)
    w = rng.exponential(1.0, count)

    tan_term = math.tan(math.pi * alpha / 2)
    b = math.atan(tan_term) / alpha
    s = (1.0 + tan_term ** 2) ** (1.0 / (2.0 * alpha))
    x = (s * np.sin(alpha * (v + b)) / np.cos(v) ** (1.0 / alpha)
         * (np.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha))

    scale = abs(math.cos(math.pi * alpha / 2)) ** (1.0 / alpha)
    out = scale * x
    return float(out[0]) if size is None else out


def laplace_self_test(alpha: float, rng: np.random.Generator, count: int = 200_000,
                      lambdas=(0.1, 0.25, 0.5)) -> list:
    """Empirical Laplace transform of sample_stable against exp(l^alpha).

    Returns one dict per lambda with estimate, target, standard error and z-score.
    """
    samples = sample_stable(alpha, rng, count)
    results = []
    for lam in lambdas:
        values = np.exp(-lam * samples)
        estimate = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(count))
        target = math.exp(lam ** alpha)
        results.append({
            'alpha': alpha, 'lambda': lam, 'estimate': estimate, 'target': target,
            'se': se, 'z': (estimate - target) / se if se > 0 else 0.0,
        })
    return results


# -- condensation vertex location -----------------------------------------------

@lru_cache(maxsize=16)
def _cached_size_pmf(dist: OffspringDistribution, n_max: int) -> np.ndarray:
    return size_pmf(dist, n_max)


@dataclass
class ULocationLaw(LimitLaw):
    """P(U = i) -> gamma P(|tau| >= i + 1)"""
    dist: Optional[OffspringDistribution] = None
    n_max: int = 512

    def __post_init__(self):
        self.tag = 'u_location'
        sizes = _cached_size_pmf(self.dist, self.n_max)
        # survival[i] = P(|tau| >= i + 1) for i = 0..n_max - 1
        self._survival = np.clip(1.0 - np.cumsum(sizes)[:self.n_max], 0.0, 1.0)
        # tail envelope P(|tau| = j) <= C j^(-1 - theta) fitted at n_max
        self._envelope = 2.0 * sizes[self.n_max] * self.n_max ** (1.0 + self.dist.theta)

    def pmf(self, i):
        i = np.asarray(i)
        inside = np.clip(i, 0, self.n_max - 1)
        theta = self.dist.theta
        beyond = self._envelope * np.maximum(i, 1) ** (-theta) / theta
        values = np.where(i < self.n_max, self._survival[inside], beyond)
        out = np.where(i >= 0, self.dist.gamma * values, 0.0)
        return float(out) if out.ndim == 0 else out

    def remainder_bound(self, upto: int) -> float:
        """Bound on sum_{i > upto} P(U = i) from the power-law envelope of P(|tau| = j)."""
        theta = self.dist.theta
        x = max(upto, 1)
        # sum_{i>x} gamma C i^-theta / theta <= gamma C x^(1-theta) / (theta (theta - 1))
        bound = self.dist.gamma * self._envelope * x ** (1.0 - theta) / (theta * (theta - 1.0))
        if upto < self.n_max - 1:
            bound += float(self.dist.gamma * self._survival[upto + 1:].sum())
        return bound


def u_location_pmf(dist: OffspringDistribution, i: int, n_max: int = 512) -> float:
    """gamma * P(|tau| >= i + 1)."""
    if i < 0:
        return 0.0
    return float(ULocationLaw(dist=dist, n_max=max(n_max, i + 2)).pmf(i))


# -- height profile -----------------------------------------------------------------

@dataclass
class SpineMarginalLaw(LimitLaw):
    """Law of 1 + e_0 + e_1 with e_i i.i.d. geometric of parameter 1 - m"""
    m: float = 0.5

    def __post_init__(self):
        self.tag = 'spine_marginal'

    def pmf(self, h):
        h = np.asarray(h)
        values = h * (1.0 - self.m) ** 2 * self.m ** np.maximum(h - 1, 0)
        out = np.where(h >= 1, values, 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size):
        geometric = GeometricLaw(m=self.m)
        return 1 + geometric.sample(rng, size) + geometric.sample(rng, size)

    def correlation(self) -> float:
        """corr(1 + e_0 + e_1, 1 + e_0 + e_2)"""
        return 0.5


def spine_marginal_pmf(m: float, h: int) -> float:
    """h (1 - m)^2 m^(h - 1) for h >= 1."""
    if h < 1:
        return 0.0
    return h * (1.0 - m) ** 2 * m ** (h - 1)


def spine_length_pmf(m: float, i: int) -> float:
    """P(S = i) = (1 - m) m^(i - 1) for the spine of the local limit."""
    if i < 1:
        return 0.0
    return (1.0 - m) * m ** (i - 1)


def root_degree_pmf(dist: OffspringDistribution, k: int) -> float:
    """Limit of P(k_root = k): the root of T^ is a non-top spine vertex with
    probability m and then has zeta* children, so the limit is k mu_k."""
    if k < 1:
        return 0.0
    return k * float(dist.pmf(k))


def height_tail(dist: OffspringDistribution, k_max: int) -> np.ndarray:
    """P(H(tau) > k) for k = 0..k_max by iterating the generating function.

    Iterates q -> sum_j mu_j (1 - (1 - q)^j) from q = 1, which is 1 - f(1 - q)
    written to keep precision when q is tiny.
    """
    j = np.arange(1, dist.kmax + 1, dtype=np.float64)
    mu = dist.probs[1:]
    q = 1.0
    tails = np.empty(k_max + 1)
    with np.errstate(divide='ignore'):
        for k in range(k_max + 1):
            log_keep = math.log1p(-q) if q < 1.0 else -math.inf
            head = math.fsum(mu * -np.expm1(j * log_keep))
            tail = dist.tail_after * (-math.expm1(dist.kmax * log_keep)) if q < 1.0 else dist.tail_after
            q = head + tail
            tails[k] = q
    return tails
