#!/usr/bin/env python3
"""
Statistical comparison of Monte Carlo samples with target laws.

chi-square is the primary test for discrete laws. KS is used as a distance
with fixed thresholds for discrete targets; its asymptotic Kolmogorov p-value
is only meaningful for continuous ones.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as sps

from errors import EmptySampleError, ValidationError

logger = logging.getLogger('condensation_lab.stats')

Pmf = Union[Mapping[Any, float], Callable[[int], float]]


def _as_array(samples) -> np.ndarray:
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptySampleError("Empty sample")
    return values


@dataclass
class EmpiricalCDF:
    sorted_values: np.ndarray

    def __call__(self, x):
        return np.searchsorted(self.sorted_values, x, side='right') / len(self.sorted_values)


def empirical_cdf(samples) -> EmpiricalCDF:
    return EmpiricalCDF(np.sort(_as_array(samples)))


def empirical_pmf(samples: Iterable) -> Dict[Any, float]:
    counts = Counter(samples)
    total = sum(counts.values())
    if total == 0:
        raise EmptySampleError("Empty sample")
    return {value: c / total for value, c in counts.items()}


@dataclass
class KSResult:
    statistic: float
    p_value: float
    count: int


def ks_statistic(samples, cdf: Callable) -> KSResult:
    """sup |F_N - F| against a target cdf; p-value from the Kolmogorov law."""
    x = np.sort(_as_array(samples))
    n = len(x)
    f = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    d = float(max(upper.max(), lower.max(), 0.0))
    return KSResult(statistic=d, p_value=float(sps.kstwobign.sf(d * math.sqrt(n))), count=n)


def ks_two_sample(a, b) -> KSResult:
    a = _as_array(a)
    b = _as_array(b)
    result = sps.ks_2samp(a, b)
    return KSResult(statistic=float(result.statistic), p_value=float(result.pvalue),
                    count=min(len(a), len(b)))


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    bins: list = field(default_factory=list)


def chi_square(samples: Sequence, pmf: Pmf, support_max: Optional[int] = None,
               min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson chi-square of samples against a discrete law.

    pmf is a mapping value -> probability or a callable on integers together
    with support_max. Values outside the listed support form one extra bin
    holding the leftover mass. Adjacent bins are merged until every expected
    count reaches min_expected.

    Raises:
        EmptySampleError: on an empty sample.
        ValidationError: if fewer than two bins survive merging.
    """
    values = list(samples.tolist() if isinstance(samples, np.ndarray) else samples)
    n = len(values)
    if n == 0:
        raise EmptySampleError("Empty sample")
    if callable(pmf):
        if support_max is None:
            raise ValidationError("A callable pmf needs support_max")
        lo = int(min(0, min(values)))
        table = {k: float(pmf(k)) for k in range(lo, support_max + 1)}
    else:
        table = dict(pmf)

    keys = sorted(table)
    counts = Counter(values)
    observed = [float(counts.get(k, 0)) for k in keys]
    expected = [n * table[k] for k in keys]
    labels: list = [[k] for k in keys]
    rest_obs = n - sum(observed)
    rest_exp = n * max(0.0, 1.0 - math.fsum(table.values()))
    if rest_exp > 0 or rest_obs > 0:
        observed.append(rest_obs)
        expected.append(rest_exp)
        labels.append(['rest'])

    merged_obs, merged_exp, merged_labels = [], [], []
    acc_o, acc_e, acc_l = 0.0, 0.0, []
    for o, e, lab in zip(observed, expected, labels):
        acc_o += o
        acc_e += e
        acc_l += lab
        if acc_e >= min_expected:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            merged_labels.append(acc_l)
            acc_o, acc_e, acc_l = 0.0, 0.0, []
    if acc_l:
        if merged_obs:
            merged_obs[-1] += acc_o
            merged_exp[-1] += acc_e
            merged_labels[-1] += acc_l
        else:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            merged_labels.append(acc_l)

    if len(merged_obs) < 2:
        raise ValidationError("Degenerate binning: fewer than two bins with enough expected mass")
    obs = np.array(merged_obs)
    exp = np.array(merged_exp)
    if (exp <= 0).any():
        # observations where the law puts no mass
        return ChiSquareResult(statistic=math.inf, dof=len(obs) - 1, p_value=0.0, bins=merged_labels)
    statistic = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    return ChiSquareResult(statistic=statistic, dof=dof, p_value=float(sps.chi2.sf(statistic, dof)),
                           bins=merged_labels)


def tv_distance(pmf_a, pmf_b) -> float:
    """Total variation 1/2 sum |a - b| for mappings or aligned arrays."""
    if isinstance(pmf_a, Mapping) and isinstance(pmf_b, Mapping):
        keys = set(pmf_a) | set(pmf_b)
        return 0.5 * math.fsum(abs(pmf_a.get(k, 0.0) - pmf_b.get(k, 0.0)) for k in keys)
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    size = max(len(a), len(b))
    a = np.pad(a, (0, size - len(a)))
    b = np.pad(b, (0, size - len(b)))
    return 0.5 * float(np.abs(a - b).sum())


def mean_se(samples) -> Tuple[float, float]:
    x = _as_array(samples)
    if len(x) == 1:
        return float(x[0]), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def linear_slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


def correlation(a, b) -> float:
    return float(np.corrcoef(_as_array(a), _as_array(b))[0, 1])


# -- mergeable accumulators ---------------------------------------------------

@dataclass
class RunningMoments:
    """Count, sum and sum of squares; merges are order independent"""
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, values) -> 'RunningMoments':
        x = np.asarray(values, dtype=float).ravel()
        self.count += len(x)
        self.total += float(x.sum())
        self.total_sq += float((x * x).sum())
        return self

    def merge(self, other: 'RunningMoments') -> 'RunningMoments':
        return RunningMoments(self.count + other.count, self.total + other.total,
                              self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        if self.count == 0:
            raise EmptySampleError("No values accumulated")
        return self.total / self.count

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise EmptySampleError("Need two values for a variance")
        return max(0.0, (self.total_sq - self.total ** 2 / self.count) / (self.count - 1))

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count)


@dataclass
class Histogram:
    counts: Counter = field(default_factory=Counter)

    def add(self, values: Iterable) -> 'Histogram':
        self.counts.update(values)
        return self

    def merge(self, other: 'Histogram') -> 'Histogram':
        return Histogram(self.counts + other.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def pmf(self) -> Dict[Any, float]:
        total = self.total
        if total == 0:
            raise EmptySampleError("Empty histogram")
        return {k: c / total for k, c in sorted(self.counts.items())}
