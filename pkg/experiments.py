#!/usr/bin/env python3
"""
Experiment driver - reproduces each limit statement as a named, seeded run
Builds samplers, fans replicas out over joblib workers, compares estimates
with targets and assembles ExperimentReports with per-check CSV data
"""

import json
import logging
import math
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

import stats as st
from errors import ConfigurationError, LabError
from limits import (
    FrechetLaw, GeometricLaw, SpineMarginalLaw, ULocationLaw, frechet_law,
    height_tail, laplace_self_test, root_degree_pmf, sample_stable,
)
from models import CheckRecord, ExperimentReport, LabConfig
from offspring import OffspringDistribution, from_spec, norming_sequence, stable_norming, step_law
from oracle import exact_conditional_law
from samplers import ConditionedSampler, sample_gw_generations
from tree import PlaneTree, stats as tree_stats, subtree_heights
from walk import size_pmf

logger = logging.getLogger('condensation_lab.experiments')

EXPERIMENT_CODES = {
    'E1': 1, 'E2': 2, 'E3': 3, 'E-cor': 4, 'E4': 5, 'E5': 6, 'E-luka': 7, 'E-gh': 8,
}
# stream labels for randomness that is not a tree draw
STREAM_STABLE = 1001
STREAM_WALKS = 1002
STREAM_PROGENY = 1003
STREAM_UNCONDITIONED = 1004


# -- per-tree summaries (module level so joblib can ship them) -----------------

def summarize_tree(tree: PlaneTree, params: Dict[str, Any]) -> Dict[str, Any]:
    """Scalar statistics of one tree; params switch on the optional ones."""
    s = tree_stats(tree)
    n = tree.size
    out: Dict[str, Any] = {
        'delta': s.delta,
        'second': s.second_degree,
        'u': s.u_star_index,
        'gen': s.u_star_generation,
        'height': s.height,
        'xi_max': s.xi_max,
        'pivot': s.pivot_I,
        'outside': n - 1 - (int(s.zeta_tilde[-1]) if s.delta else 0),
        'root_degree': int(tree.degrees[0]),
    }
    if 'z_times' in params:
        zs = []
        for t in params['z_times']:
            j = int(math.floor(s.delta * t))
            zs.append(int(s.z_partial[j - 1]) if j > 0 else 0)
        out['z'] = zs
    if 'h_fracs' in params:
        depths = tree.depths
        out['h'] = [int(depths[min(int(math.floor(n * t)), n - 1)]) for t in params['h_fracs']]
    if 'luka_time' in params:
        values = np.concatenate(([0], np.cumsum(tree.degrees - 1)))
        out['sup_before_u'] = int(values[:s.u_star_index + 1].max())
        out['w_at'] = int(values[int(math.floor(n * params['luka_time']))])
    if 'tall_threshold' in params:
        heights = subtree_heights(tree, s)
        first = min(int(math.floor(params['gamma'] * n / 2)), s.delta)
        out['tall'] = int((heights[:first] >= params['tall_threshold']).sum())
    return out


def _summaries_chunk(sampler, seed: int, code: int, case: int, replicas: List[int],
                     summarize: Callable, params: Dict[str, Any]) -> List[Dict[str, Any]]:
    results = []
    for r in replicas:
        rng = np.random.default_rng(np.random.SeedSequence([seed, code, case, r]))
        results.append(summarize(sampler.sample(rng), params))
    return results


def last_zero_of_walk(dist: OffspringDistribution, rng: np.random.Generator, depth: int) -> int:
    """sup{i >= 0 : W_i = 0} for the unconditioned walk, followed until it sinks below -depth."""
    step = step_law(dist)
    walk = 0
    offset = 0
    last = 0
    chunk = max(64, int(2 * depth / dist.gamma))
    while True:
        path = walk + np.cumsum(step.sample(rng, chunk))
        zeros = np.flatnonzero(path == 0)
        if len(zeros):
            last = offset + int(zeros[-1]) + 1
        walk = int(path[-1])
        offset += chunk
        if walk < -depth:
            return last


def progeny_variance(dist: OffspringDistribution, n_max: int = 2048) -> float:
    """Var|tau| from the exact size pmf plus a power-law tail correction.

    Direct convolution keeps the relative precision of the far tail, which
    FFT round-off would swamp.
    """
    sizes = size_pmf(dist, n_max, use_fft=False)
    j = np.arange(n_max + 1, dtype=float)
    first = math.fsum(j * sizes)
    second = math.fsum(j * j * sizes)
    # P(|tau| = j) ~ C j^(-1-theta) beyond n_max
    c = sizes[n_max] * n_max ** (1 + dist.theta)
    first += c * n_max ** (1 - dist.theta) / (dist.theta - 1)
    second += c * n_max ** (2 - dist.theta) / (dist.theta - 2)
    return second - first ** 2


def progeny_quantiles(dist: OffspringDistribution, n_values: List[int], cap: int = 1 << 15) -> List[int]:
    """B'_n = inf{x : P(|tau| >= x) <= 1/n} for each n."""
    size = 1024
    level = 1.0 / max(n_values)
    while True:
        # survival[j] = P(|tau| >= j + 1)
        survival = 1.0 - np.cumsum(size_pmf(dist, size))
        if survival[-1] <= level:
            break
        if size >= cap:
            raise LabError(f"Progeny quantile for n={max(n_values)} lies beyond {cap}")
        size *= 2
    return [int(np.argmax(survival <= 1.0 / n)) + 1 for n in n_values]


def calibrate_ks(count: int, reps: int, seed: int, theta: float = 1.5,
                 quantile: float = 0.999) -> Dict[str, Any]:
    """Quantile of the KS distance between `count` exact draws and their own law.

    Returns the calibration record that tolerances in config.json refer to.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9000, count]))
    law = FrechetLaw(theta=theta)
    distances = [st.ks_statistic(law.sample(rng, count), law.cdf).statistic for _ in range(reps)]
    return {
        'calibration_id': f"ks-{count}-{reps}-{seed}",
        'count': count,
        'reps': reps,
        'quantile': quantile,
        'ks_quantile': float(np.quantile(distances, quantile)),
    }


class ExperimentRunner:
    """Runs the configured experiments and writes report.json plus CSV data"""

    def __init__(self, config: LabConfig, out_dir: Optional[Path] = None, seed: Optional[int] = None,
                 threads: Optional[int] = None, table_cache: Optional[Path] = None):
        self.config = config
        self.seed = config.run.seed if seed is None else seed
        self.threads = config.run.threads if threads is None else threads
        self.out_dir = Path(out_dir or config.run.out)
        cache = table_cache or config.sampling.table_cache
        self.table_cache = Path(cache) if cache else None
        self._dists: Dict[str, OffspringDistribution] = {}
        self._samplers: Dict[Tuple[str, int], ConditionedSampler] = {}
        self.timings: Dict[str, float] = {}

    # -- plumbing ------------------------------------------------------------

    def dist(self, name: str) -> OffspringDistribution:
        if name not in self._dists:
            if name not in self.config.distributions:
                raise ConfigurationError(f"Distribution '{name}' is not configured")
            self._dists[name] = from_spec(self.config.distributions[name].as_dict())
        return self._dists[name]

    def sampler(self, name: str, n: int) -> ConditionedSampler:
        key = (name, n)
        if key not in self._samplers:
            sampling = self.config.sampling
            self._samplers[key] = ConditionedSampler(
                self.dist(name), n,
                method='auto',
                rejection_max_n=sampling.rejection_max_n,
                rejection_max_tries=sampling.rejection_max_tries,
                eps_trunc=sampling.eps_trunc,
                use_fft=sampling.use_fft,
                table_mode=sampling.table_mode,
                leaf_size=sampling.leaf_size,
                memory_budget_mb=sampling.memory_budget_mb,
                cache_dir=self.table_cache,
            )
        return self._samplers[key]

    def stream(self, exp_id: str, label: int, case: int = 0) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, EXPERIMENT_CODES[exp_id], label, case])
        )

    def sample_summaries(self, exp_id: str, case: int, dist_name: str, n: int, count: int,
                         params: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
        """Per-tree summaries of `count` exact draws, in replica order.

        Replica r always uses SeedSequence([seed, code, case, r]), so the
        result does not depend on the number of workers.
        """
        sampler = self.sampler(dist_name, n)
        params = params or {}
        code = EXPERIMENT_CODES[exp_id]
        start = time.time()
        if self.threads == 1:
            results = _summaries_chunk(sampler, self.seed, code, case, list(range(count)),
                                       summarize_tree, params)
        else:
            pieces = np.array_split(np.arange(count), self.threads * 4)
            chunks = Parallel(n_jobs=self.threads)(
                delayed(_summaries_chunk)(sampler, self.seed, code, case, piece.tolist(),
                                          summarize_tree, params)
                for piece in pieces if len(piece)
            )
            results = [item for chunk in chunks for item in chunk]
        logger.info(f"[{exp_id}] {count} trees of size {n} ({dist_name}) in {time.time() - start:.1f}s")
        return results

    def write_csv(self, exp_id: str, name: str, columns: Dict[str, Any]) -> str:
        """Write equal-length columns to <out>/<exp_id>/<name>.csv; returns the relative path."""
        folder = self.out_dir / exp_id
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{name}.csv"
        data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
        np.savetxt(path, data, delimiter=',', header=','.join(columns), comments='', fmt='%.10g')
        return str(path.relative_to(self.out_dir))

    def _check(self, cfg, theorem: str, check_id: str, claim: str, anchor: str, estimate: float,
               target: float, tolerance: float, comparison: str = 'abs', data_file: Optional[str] = None,
               **details) -> CheckRecord:
        record = CheckRecord(
            check_id=check_id, theorem=theorem, claim=claim, anchor=anchor,
            estimate=float(estimate), target=float(target), tolerance=float(tolerance),
            comparison=comparison, calibration_id=cfg.calibration_id, data_file=data_file,
            details={k: (float(v) if isinstance(v, (np.floating, np.integer)) else v)
                     for k, v in details.items()},
        )
        status = "PASS" if record.verdict else "FAIL"
        log = logger.info if record.verdict else logger.warning
        log(f"[CHECK] {check_id}: estimate={record.estimate:.6g} target={record.target:.6g} "
            f"tol={record.tolerance:.3g} ({comparison}) -> {status}")
        return record

    def _report(self, exp_id: str, title: str, dists: List[str], n_values: List[int],
                counts: List[int]) -> ExperimentReport:
        return ExperimentReport(
            experiment_id=exp_id, title=title,
            distributions={name: self.config.distributions[name].as_dict() for name in dict.fromkeys(dists)},
            n_values=n_values, sample_counts=counts, seed=self.seed,
        )

    # -- experiments ------------------------------------------------------------

    def exp_condensation(self) -> ExperimentReport:
        """E1: Delta/(gamma n) -> 1, second largest degree, degree fluctuations"""
        cfg = self.config.experiments.e1
        cases = cfg.cases
        report = self._report('E1', 'Condensation: largest and second largest degree',
                              [c.dist for c in cases], [c.n for c in cases], [c.count for c in cases])
        by_dist: Dict[str, List[Tuple[int, np.ndarray, np.ndarray]]] = {}

        for index, case in enumerate(cases):
            dist = self.dist(case.dist)
            rows = self.sample_summaries('E1', index, case.dist, case.n, case.count)
            delta = np.array([r['delta'] for r in rows], dtype=float)
            second = np.array([r['second'] for r in rows], dtype=float)
            ratio = delta / (dist.gamma * case.n)
            b_lap = stable_norming(dist, case.n)
            second_scaled = second / b_lap
            fluct = (delta - dist.gamma * case.n) / b_lap
            tag = f"{case.dist}-n{case.n}"
            data = self.write_csv('E1', tag, {
                'delta': delta, 'second_degree': second, 'ratio': ratio,
                'second_scaled': second_scaled, 'fluctuation': fluct,
            })

            lo, hi = cfg.band
            inside = float(np.mean((ratio >= lo) & (ratio <= hi)))
            report.checks.append(self._check(
                cfg, 'condensation', f"{tag}-band", "Delta/(gamma n) -> 1 in probability",
                "P(Delta/(gamma n) in band) -> 1", inside, cfg.band_fraction, 0.0, 'min', data,
                band=list(cfg.band)))
            report.checks.append(self._check(
                cfg, 'condensation', f"{tag}-median", "Delta/(gamma n) -> 1 in probability",
                "median Delta/(gamma n) ~ 1", float(np.median(ratio)), 1.0, cfg.median_tol, 'abs', data))

            if dist.theta < 2:
                law = frechet_law(dist.theta)
                ks = st.ks_statistic(second_scaled, law.cdf)
                report.checks.append(self._check(
                    cfg, 'second-degree', f"{tag}-second-frechet", "D_n/B_n converges to a Frechet-type law",
                    "cdf exp(u^-theta / Gamma(1 - theta))", ks.statistic, 0.0, cfg.ks_tol, 'max', data,
                    p_value=ks.p_value))

            alpha = min(dist.theta, 2.0)
            neg_y = -sample_stable(alpha, self.stream('E1', STREAM_STABLE, index), cfg.stable_samples)
            ks2 = st.ks_two_sample(fluct, neg_y)
            report.checks.append(self._check(
                cfg, 'degree-fluctuations', f"{tag}-fluctuation-stable", "(Delta - gamma n)/B_n -> -Y_1",
                "E exp(-l Y_1) = exp(l^alpha)", ks2.statistic, 0.0, cfg.stable_ks_tol, 'max', data,
                p_value=ks2.p_value, alpha=alpha))
            if dist.finite_variance:
                variance = float(np.var(fluct, ddof=1))
                report.checks.append(self._check(
                    cfg, 'degree-fluctuations', f"{tag}-fluctuation-variance",
                    "(Delta - gamma n)/B_n -> -Y_1, Gaussian branch",
                    "Var(Y_1) = 2", variance, 2.0, cfg.variance_tol, 'rel', data))
            by_dist.setdefault(case.dist, []).append((case.n, ratio, second_scaled))

        for name, entries in by_dist.items():
            if len(entries) < 2:
                continue
            entries.sort(key=lambda e: e[0])
            (n_small, r_small, d_small), (n_large, r_large, d_large) = entries[0], entries[-1]
            spread_small = float(np.quantile(np.abs(r_small - 1), 0.95))
            spread_large = float(np.quantile(np.abs(r_large - 1), 0.95))
            report.checks.append(self._check(
                cfg, 'condensation', f"{name}-band-shrinks", "Delta/(gamma n) concentrates as n grows",
                f"q95|Delta/(gamma n) - 1| at n={n_large} <= at n={n_small}",
                spread_large, spread_small, 0.0, 'max'))
            if self.dist(name).theta >= 2:
                report.checks.append(self._check(
                    cfg, 'second-degree', f"{name}-second-vanishes", "D_n/B_n -> 0 when theta >= 2",
                    f"median D_n/B_n at n={n_large} <= at n={n_small}",
                    float(np.median(d_large)), float(np.median(d_small)), 0.0, 'max'))
        return report

    def exp_location(self) -> ExperimentReport:
        """E2: location U and generation |u*| of the condensation vertex"""
        cfg = self.config.experiments.e2
        case = cfg.case
        dist = self.dist(case.dist)
        report = self._report('E2', 'Location of the condensation vertex',
                              [case.dist], [case.n], [case.count])
        rows = self.sample_summaries('E2', 0, case.dist, case.n, case.count)
        u = np.array([r['u'] for r in rows])
        gen = np.array([r['gen'] for r in rows])
        outside = np.array([r['outside'] for r in rows])
        root_degree = np.array([r['root_degree'] for r in rows])
        data = self.write_csv('E2', 'location', {
            'u_index': u, 'u_generation': gen, 'outside': outside, 'root_degree': root_degree,
        })

        u_law = ULocationLaw(dist=dist, n_max=max(512, 4 * cfg.max_index))
        chi = st.chi_square(u, lambda i: u_law.pmf(i), support_max=cfg.max_index)
        report.checks.append(self._check(
            cfg, 'u-location', 'u-location-chi2', 'P(U = i) -> gamma P(|tau| >= i + 1)',
            'gamma P(|tau| >= i + 1)', chi.p_value, cfg.significance, 0.0, 'min', data,
            statistic=chi.statistic, dof=chi.dof,
            remainder_bound=u_law.remainder_bound(cfg.max_index)))
        se = math.sqrt(dist.gamma * (1 - dist.gamma) / case.count)
        report.checks.append(self._check(
            cfg, 'u-location', 'u-location-zero', 'P(U = 0) -> gamma', 'gamma P(|tau| >= 1) = gamma',
            float(np.mean(u == 0)), dist.gamma, 4 * se, 'abs', data))

        geometric = GeometricLaw(m=dist.mean_m)
        chi_gen = st.chi_square(gen, lambda k: float(geometric.pmf(k)), support_max=cfg.max_index)
        report.checks.append(self._check(
            cfg, 'u-generation', 'generation-chi2', '|u*| -> geometric', '(1 - m) m^i', chi_gen.p_value,
            cfg.significance, 0.0, 'min', data, statistic=chi_gen.statistic, dof=chi_gen.dof))
        report.checks.append(self._check(
            cfg, 'u-generation', 'generation-zero', 'P(|u*| = 0) -> 1 - m', '(1 - m) m^0',
            float(np.mean(gen == 0)), 1 - dist.mean_m, 4 * se, 'abs', data))

        limit_root = {k: root_degree_pmf(dist, k) for k in range(1, cfg.root_degree_max + 1)}
        empirical_root = {k: float(np.mean(root_degree == k)) for k in limit_root}
        tv_root = st.tv_distance(empirical_root, limit_root)
        report.checks.append(self._check(
            cfg, 'local-limit', 'root-degree-local',
            'Local limit: root degree of T^', 'P(k_root = k) -> k mu_k',
            tv_root, 0.0, 0.05, 'max', data))

        if cfg.cl_samples:
            rng = self.stream('E2', STREAM_WALKS)
            zeros = np.array([last_zero_of_walk(dist, rng, cfg.cl_depth) for _ in range(cfg.cl_samples)])
            self.write_csv('E2', 'last_zero', {'last_zero': zeros})
            ks = st.ks_two_sample(outside, zeros)
            report.checks.append(self._check(
                cfg, 'outside-subtree', 'outside-last-zero', 'n - 1 - zeta~_Delta -> sup{i : W_i = 0}',
                'last zero of the unconditioned walk', ks.statistic, 0.0, cfg.cl_ks_tol, 'max', data,
                p_value=ks.p_value))
        return report

    def exp_subtree_fluct(self) -> ExperimentReport:
        """E3: Z_{floor(Delta t)} - Delta t / gamma at the scale B_n"""
        cfg = self.config.experiments.e3
        cases = cfg.cases
        report = self._report('E3', 'Fluctuations of the subtree sizes under u*',
                              [c.dist for c in cases] + [cfg.progeny_dist],
                              [c.n for c in cases], [c.count for c in cases])
        report.notes.append("Functional convergence is checked through fixed-time marginals only.")

        for index, case in enumerate(cases):
            dist = self.dist(case.dist)
            rows = self.sample_summaries('E3', index, case.dist, case.n, case.count,
                                         {'z_times': cfg.times})
            delta = np.array([r['delta'] for r in rows], dtype=float)
            z = np.array([r['z'] for r in rows], dtype=float)
            b_lap = stable_norming(dist, case.n)
            alpha = min(dist.theta, 2.0)
            y = sample_stable(alpha, self.stream('E3', STREAM_STABLE, index), cfg.stable_samples)
            tag = f"{case.dist}-n{case.n}"
            columns = {'delta': delta}
            for k, t in enumerate(cfg.times):
                columns[f"fluct_t{t}"] = (z[:, k] - delta * t / dist.gamma) / b_lap
            data = self.write_csv('E3', tag, columns)

            for k, t in enumerate(cfg.times):
                fluct = columns[f"fluct_t{t}"]
                target = t ** (1.0 / alpha) * y / dist.gamma
                ks = st.ks_two_sample(fluct, target)
                report.checks.append(self._check(
                    cfg, 'subtree-fluctuations', f"{tag}-t{t}-stable", 'Z fluctuations -> (1/gamma) Y_t',
                    'Y_t = t^(1/alpha) Y_1', ks.statistic, 0.0, cfg.ks_tol, 'max', data,
                    p_value=ks.p_value))
            if dist.finite_variance:
                t = 0.5 if 0.5 in cfg.times else cfg.times[0]
                fluct = columns[f"fluct_t{t}"]
                report.checks.append(self._check(
                    cfg, 'subtree-fluctuations', f"{tag}-t{t}-variance",
                    'Z fluctuations -> (1/gamma) Y_t, Gaussian branch',
                    'Var = 2 t / gamma^2', float(np.var(fluct, ddof=1)), 2 * t / dist.gamma ** 2,
                    cfg.variance_tol, 'rel', data))

        for name in dict.fromkeys(c.dist for c in cases):
            dist = self.dist(name)
            target = dist.gamma ** -(1.0 + 1.0 / min(dist.theta, 2.0))
            if dist.finite_variance:
                ratio = math.sqrt(progeny_variance(dist)) / dist.sigma
                report.checks.append(self._check(
                    cfg, 'progeny-norming', f"{name}-size-norming", "B'_n/B_n -> gamma^-(1 + 1/2)",
                    'sigma\' = sigma / gamma^(3/2)', ratio, target, 1e-3, 'rel'))
            else:
                quantiles = progeny_quantiles(dist, cfg.ratio_n_grid)
                errors = [abs(q / norming_sequence(dist, n) / target - 1)
                          for q, n in zip(quantiles, cfg.ratio_n_grid)]
                self.write_csv('E3', f"{name}-norming-ratio", {'n': cfg.ratio_n_grid, 'rel_error': errors})
                report.checks.append(self._check(
                    cfg, 'progeny-norming', f"{name}-size-norming-trend", "B'_n/B_n -> gamma^-(1 + 1/theta)",
                    f"relative error at n={cfg.ratio_n_grid[-1]} <= at n={cfg.ratio_n_grid[0]}",
                    errors[-1], errors[0], 0.0, 'max', errors=errors))

        progeny = self.dist(cfg.progeny_dist)
        if progeny.finite_variance:
            sizes, _ = sample_gw_generations(progeny, self.stream('E3', STREAM_PROGENY), cfg.progeny_samples)
            sizes = sizes[sizes > 0]
            estimate = float(np.std(sizes, ddof=1)) / progeny.sigma
            report.checks.append(self._check(
                cfg, 'progeny-norming', f"{cfg.progeny_dist}-progeny-sigma", "sigma'/sigma = gamma^(-3/2)",
                'Var|tau| = sigma^2 / gamma^3', estimate, progeny.gamma ** -1.5, cfg.progeny_tol, 'rel',
                samples=len(sizes), mean_size=float(sizes.mean()), target_mean=1 / progeny.gamma))
        return report

    def exp_max_subtree(self) -> ExperimentReport:
        """E-cor: max xi_i / B_n"""
        cfg = self.config.experiments.e_cor
        cases = cfg.cases
        report = self._report('E-cor', 'Largest subtree under the condensation vertex',
                              [c.dist for c in cases], [c.n for c in cases], [c.count for c in cases])
        by_dist: Dict[str, List[Tuple[int, float]]] = {}
        for index, case in enumerate(cases):
            dist = self.dist(case.dist)
            rows = self.sample_summaries('E-cor', index, case.dist, case.n, case.count)
            scaled = np.array([r['xi_max'] for r in rows], dtype=float) / stable_norming(dist, case.n)
            tag = f"{case.dist}-n{case.n}"
            data = self.write_csv('E-cor', tag, {'xi_max_scaled': scaled})
            if dist.theta < 2:
                law = frechet_law(dist.theta, scale=dist.gamma)
                ks = st.ks_statistic(scaled, law.cdf)
                report.checks.append(self._check(
                    cfg, 'max-subtree', f"{tag}-frechet", 'max xi_i / B_n converges to a Frechet-type law',
                    'cdf exp(u^-theta / (gamma^theta Gamma(1 - theta)))', ks.statistic, 0.0,
                    cfg.ks_tol, 'max', data, p_value=ks.p_value))
            else:
                by_dist.setdefault(case.dist, []).append((case.n, float(np.quantile(scaled, cfg.quantile))))
        for name, entries in by_dist.items():
            if len(entries) < 2:
                continue
            entries.sort()
            report.checks.append(self._check(
                cfg, 'max-subtree', f"{name}-vanishes", 'max xi_i / B_n -> 0 when theta >= 2',
                f"q{cfg.quantile} at n={entries[-1][0]} <= at n={entries[0][0]}",
                entries[-1][1], entries[0][1], 0.0, 'max', quantiles=entries))
        return report

    def exp_height(self) -> ExperimentReport:
        """E4: height grows like ln n / ln(1/m)"""
        cfg = self.config.experiments.e4
        dist = self.dist(cfg.dist)
        report = self._report('E4', 'Logarithmic height', [cfg.dist], cfg.n_grid, [cfg.count] * len(cfg.n_grid))
        target_slope = 1.0 / math.log(1.0 / dist.mean_m)

        means, roots = [], []
        for index, n in enumerate(cfg.n_grid):
            rows = self.sample_summaries('E4', index, cfg.dist, n, cfg.count)
            heights = np.array([r['height'] for r in rows], dtype=float)
            self.write_csv('E4', f"height-n{n}", {'height': heights})
            means.append(float(heights.mean()))
            roots.append(float(math.sqrt(np.mean(heights ** 2))))
        logs = np.log(cfg.n_grid)
        data = self.write_csv('E4', 'height-summary', {'n': cfg.n_grid, 'mean': means, 'rms': roots})
        report.checks.append(self._check(
            cfg, 'height-growth', 'height-slope', 'H(t_n) / ln n -> 1 / ln(1/m)', 'E H ~ ln n / ln(1/m)',
            st.linear_slope(logs, means), target_slope, cfg.slope_tol, 'rel', data))
        report.checks.append(self._check(
            cfg, 'height-growth', 'height-l2-slope', 'convergence also holds in L^p',
            'E[H^2]^(1/2) ~ ln n / ln(1/m)', st.linear_slope(logs, roots), target_slope,
            cfg.moment_tol, 'rel', data))

        k_lo, k_hi = cfg.plateau_window
        tails = height_tail(dist, max(k_hi, cfg.mc_window[1]))
        ks = np.arange(k_lo, k_hi + 1)
        plateau = tails[ks] / dist.mean_m ** ks
        spread = float((plateau.max() - plateau.min()) / plateau.mean())
        data = self.write_csv('E4', 'height-tail', {'k': ks, 'tail': tails[ks], 'ratio': plateau})
        report.checks.append(self._check(
            cfg, 'height-tail', 'tail-plateau', 'P(H(tau) > k) ~ c m^k', 'P(H > k) / m^k constant',
            spread, 0.0, cfg.plateau_tol, 'max', data, constant=float(plateau.mean())))

        if cfg.mc_trees:
            _, heights = sample_gw_generations(dist, self.stream('E4', STREAM_UNCONDITIONED), cfg.mc_trees)
            heights = heights[heights >= 0]
            z_scores = []
            for k in range(cfg.mc_window[0], cfg.mc_window[1] + 1):
                p = tails[k]
                p_hat = float(np.mean(heights > k))
                z_scores.append((p_hat - p) / math.sqrt(p * (1 - p) / len(heights)))
            report.checks.append(self._check(
                cfg, 'height-tail', 'tail-monte-carlo', 'exact height tail matches simulation',
                'P(H > k) = 1 - f^(k+1)(0)', max(abs(z) for z in z_scores), 0.0, cfg.mc_z, 'max',
                z_scores=z_scores, trees=len(heights)))
        return report

    def exp_marginals(self) -> ExperimentReport:
        """E5: H_{floor(nt)} -> 1 + e_0 + e_1"""
        cfg = self.config.experiments.e5
        case = cfg.case
        dist = self.dist(case.dist)
        report = self._report('E5', 'Height profile marginals', [case.dist], [case.n], [case.count])
        rows = self.sample_summaries('E5', 0, case.dist, case.n, case.count, {'h_fracs': cfg.times})
        h = np.array([r['h'] for r in rows])
        data = self.write_csv('E5', 'profile', {f"h_t{t}": h[:, k] for k, t in enumerate(cfg.times)})
        law = SpineMarginalLaw(m=dist.mean_m)
        for k, t in enumerate(cfg.times):
            chi = st.chi_square(h[:, k], lambda x: float(law.pmf(x)), support_max=40)
            report.checks.append(self._check(
                cfg, 'profile-marginals', f"profile-t{t}-chi2",
                'H_{floor(nt)} -> 1 + e_0 + e_1', 'h (1 - m)^2 m^(h - 1)',
                chi.p_value, cfg.significance, 0.0, 'min', data, statistic=chi.statistic, dof=chi.dof))
        if len(cfg.times) >= 2:
            corr = st.correlation(h[:, 0], h[:, 1])
            report.checks.append(self._check(
                cfg, 'profile-marginals', 'profile-correlation', 'joint limit (1 + e_0 + e_1, 1 + e_0 + e_2)',
                'corr = Var e_0 / (Var e_0 + Var e_1)', corr, law.correlation(),
                cfg.correlation_tol, 'abs', data))
        return report

    def exp_luka_and_indep(self) -> ExperimentReport:
        """E-luka / E-indep: path before and after U, asymptotic independence of subtrees"""
        cfg = self.config.experiments.e_luka
        dist = self.dist(cfg.dist)
        report = self._report('E-luka', 'Lukasiewicz path shape and subtree independence',
                              [cfg.dist], cfg.n_grid, [cfg.count] * len(cfg.n_grid))
        report.notes.append("Skorokhod convergence is checked through sup-statistics and one marginal.")
        quantiles, means = [], []
        for index, n in enumerate(cfg.n_grid):
            rows = self.sample_summaries('E-luka', index, cfg.dist, n, cfg.count, {'luka_time': cfg.time})
            sup = np.array([r['sup_before_u'] for r in rows], dtype=float) / n
            w = np.array([r['w_at'] for r in rows], dtype=float) / n
            self.write_csv('E-luka', f"path-n{n}", {'sup_before_u': sup, 'w_at': w})
            quantiles.append(float(np.quantile(sup, cfg.quantile)))
            means.append(float(w.mean()))
        data = self.write_csv('E-luka', 'path-summary', {'n': cfg.n_grid, 'sup_quantile': quantiles, 'w_mean': means})
        report.checks.append(self._check(
            cfg, 'path-shape', 'sup-before-u', 'sup_{i <= U} W_i / n -> 0',
            f"q{cfg.quantile} at n={cfg.n_grid[-1]} <= at n={cfg.n_grid[0]}",
            quantiles[-1], quantiles[0], 0.0, 'max', data))
        report.checks.append(self._check(
            cfg, 'path-shape', 'path-after-u', 'W_{floor(nt)} / n -> gamma (1 - t)', 'gamma (1 - t)',
            means[-1], dist.gamma * (1 - cfg.time), cfg.path_tol, 'rel', data))

        distances = []
        for n in cfg.oracle_n:
            joint = exact_conditional_law(dist, n, 'subtree_pair').pmf
            first: Dict[int, float] = {}
            second: Dict[int, float] = {}
            for (a, b), p in joint.items():
                first[a] = first.get(a, 0.0) + p
                second[b] = second.get(b, 0.0) + p
            product = {(a, b): pa * pb for a, pa in first.items() for b, pb in second.items()}
            distances.append(st.tv_distance(joint, product))
        data = self.write_csv('E-luka', 'independence', {'n': cfg.oracle_n, 'tv': distances})
        report.checks.append(self._check(
            cfg, 'subtree-independence', 'subtree-independence', '|T_1|, |T_2| asymptotically independent',
            f"TV(joint, product) at n={cfg.oracle_n[-1]} <= at n={cfg.oracle_n[0]}",
            distances[-1], distances[0], 0.0, 'max', data, distances=distances))
        return report

    def exp_gh_diagnostic(self) -> ExperimentReport:
        """E-gh: number of subtrees of height >= eta ln n grows like n^(1 - eta ln(1/m))"""
        cfg = self.config.experiments.e_gh
        dist = self.dist(cfg.dist)
        eta = cfg.eta_scale / math.log(1.0 / dist.mean_m)
        # n chosen so that eta ln n sits just below each integer level
        n_grid = [int(math.floor(math.exp((k - 1e-9) / eta))) for k in cfg.height_levels]
        report = self._report('E-gh', 'Tall subtrees under the condensation vertex',
                              [cfg.dist], n_grid, [cfg.count] * len(n_grid))
        means = []
        for index, (n, level) in enumerate(zip(n_grid, cfg.height_levels)):
            rows = self.sample_summaries('E-gh', index, cfg.dist, n, cfg.count,
                                         {'tall_threshold': level, 'gamma': dist.gamma})
            counts = np.array([r['tall'] for r in rows], dtype=float)
            self.write_csv('E-gh', f"tall-n{n}", {'count': counts})
            means.append(float(counts.mean()))
        data = self.write_csv('E-gh', 'tall-summary', {'n': n_grid, 'level': cfg.height_levels, 'mean': means})
        slope = st.loglog_slope(n_grid, means) if min(means) > 0 else float('nan')
        target = 1.0 - eta * math.log(1.0 / dist.mean_m)
        report.checks.append(self._check(
            cfg, 'tall-subtrees', 'tall-count-slope', 'not tight for Gromov-Hausdorff: many tall subtrees',
            'mean count ~ n^(1 - eta ln(1/m))', slope, target, cfg.slope_tol, 'rel', data,
            eta=eta, means=means))
        return report

    # -- driver --------------------------------------------------------------------

    def experiment_table(self) -> Dict[str, Tuple[Callable[[], ExperimentReport], bool]]:
        ex = self.config.experiments
        return {
            'E1': (self.exp_condensation, ex.e1.enabled),
            'E2': (self.exp_location, ex.e2.enabled),
            'E3': (self.exp_subtree_fluct, ex.e3.enabled),
            'E-cor': (self.exp_max_subtree, ex.e_cor.enabled),
            'E4': (self.exp_height, ex.e4.enabled),
            'E5': (self.exp_marginals, ex.e5.enabled),
            'E-luka': (self.exp_luka_and_indep, ex.e_luka.enabled),
            'E-gh': (self.exp_gh_diagnostic, ex.e_gh.enabled),
        }

    def stable_self_test(self) -> List[Dict[str, Any]]:
        """Laplace matching of the stable sampler, run before any experiment uses it."""
        results = []
        for alpha in (1.5, 2.0):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 9100, int(alpha * 10)]))
            results.extend(laplace_self_test(alpha, rng))
        failed = [r for r in results if abs(r['z']) > 3]
        if failed:
            logger.warning(f"[SELFTEST] stable sampler Laplace mismatch: {failed}")
        return results

    def run(self, ids: Optional[List[str]] = None) -> List[ExperimentReport]:
        """Run the selected (default: all enabled) experiments and write report.json."""
        table = self.experiment_table()
        unknown = [i for i in (ids or []) if i not in table]
        if unknown:
            raise ConfigurationError(f"Unknown experiments {unknown}; known: {list(table)}")
        selected = ids or [k for k, (_, enabled) in table.items() if enabled]

        self.out_dir.mkdir(parents=True, exist_ok=True)
        self_test = self.stable_self_test()
        reports = []
        for exp_id in selected:
            method, _ = table[exp_id]
            logger.info(f"[EXPERIMENT] {exp_id} started (seed={self.seed}, threads={self.threads})")
            start = time.time()
            report = method()
            self.timings[exp_id] = round(time.time() - start, 3)
            logger.info(f"[EXPERIMENT] {exp_id} finished in {self.timings[exp_id]:.1f}s, "
                        f"{'passed' if report.passed else 'FAILED'}")
            reports.append(report)

        payload = {
            'seed': self.seed,
            'passed': all(r.passed for r in reports),
            'stable_self_test': self_test,
            'experiments': [r.model_dump() for r in reports],
        }
        with open(self.out_dir / 'report.json', 'w') as f:
            json.dump(payload, f, indent=2)
        with open(self.out_dir / 'timings.json', 'w') as f:
            json.dump({'threads': self.threads, 'seconds': self.timings}, f, indent=2)
        return reports
