#!/usr/bin/env python3
"""
Self-test and diagnostics for condensation-lab.
Checks the stable sampler, the exact size law, the tree codings and the
KS calibration before any experiment relies on them.
"""

import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent.parent))

from experiments import calibrate_ks  # noqa: E402
from limits import laplace_self_test  # noqa: E402
from offspring import build_heavy_tail, step_law  # noqa: E402
from oracle import enumerate_trees, exact_tree_law, size_probability  # noqa: E402
from samplers import ConditionedSampler  # noqa: E402
from settings import load_config  # noqa: E402
from stats import tv_distance  # noqa: E402
from tree import (  # noqa: E402
    forest_lukasiewicz, height_from_path, height_function, lukasiewicz, modified_path, stats,
    subtree_forest, tree_from_lukasiewicz,
)
from walk import bridge_table, kemperman_size_pmf  # noqa: E402

console = Console()

REPORT_PATH = Path(__file__).parent.parent / "self_test_report.json"
KEMPERMAN_TOL = 1e-12
STABLE_Z = 4.0


class LabSelfTest:
    def __init__(self, seed: int = 20240601, theta: float = 2.5, mean: float = 0.5):
        """Initialize with a small-kmax heavy-tailed law."""
        self.seed = seed
        self.dist = build_heavy_tail(theta, mean, kmax=10_000)

    def check_stable_sampler(self) -> List[Dict]:
        """Empirical Laplace transform of the stable sampler against exp(l^alpha)."""
        results = []
        for alpha in (1.5, 2.0):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 9100, int(alpha * 10)]))
            for row in laplace_self_test(alpha, rng):
                row['ok'] = abs(row['z']) <= STABLE_Z
                results.append(row)
        return results

    def check_kemperman(self, n_max: int = 12) -> List[Dict]:
        """P(|tau| = n) from the bridge table against the enumeration oracle."""
        results = []
        for n in range(1, n_max + 1):
            exact = size_probability(self.dist, n)
            table = bridge_table(step_law(self.dist), n)
            value = kemperman_size_pmf(self.dist, n, table)
            error = abs(value - exact) / exact
            results.append({'n': n, 'kemperman': value, 'oracle': exact, 'rel_error': error,
                            'ok': error <= KEMPERMAN_TOL})
        return results

    def check_structural_identities(self, n_max: int = 9) -> Dict:
        """Codings, pivot, endpoint, forest prefixes and suffix over every tree with n <= n_max vertices."""
        status = {'trees': 0, 'failures': []}
        for n in range(1, n_max + 1):
            for tree in enumerate_trees(n):
                status['trees'] += 1
                problems = []
                path = lukasiewicz(tree).values
                if tree_from_lukasiewicz(lukasiewicz(tree)) != tree:
                    problems.append('lukasiewicz round trip')
                if not np.array_equal(height_from_path(path), height_function(tree)):
                    problems.append('height from path')
                s = stats(tree)
                shifted, pivot, zeta = modified_path(tree)
                values = shifted.values
                if int(s.xi.sum()) != (int(zeta[-1]) if s.delta else 0):
                    problems.append('sum of xi')
                if s.u_star_index != n - 1 - pivot:
                    problems.append('U = n - 1 - I')
                if s.delta != -int(values[n - 1]):
                    problems.append('Delta = -W~_{n-1}')
                for k in range(1, s.delta + 1):
                    prefix = forest_lukasiewicz(subtree_forest(tree, 1, k, s)).values
                    if not np.array_equal(prefix, values[:zeta[k - 1] + 1]):
                        problems.append(f'forest prefix k={k}')
                        break
                if not np.array_equal(values[pivot:] - values[pivot], path[:s.u_star_index + 1]):
                    problems.append('suffix after I')
                if problems:
                    status['failures'].append({'degrees': tree.degrees.tolist(), 'problems': problems})
        status['ok'] = not status['failures']
        return status

    def check_sampler_against_oracle(self, n: int = 7, count: int = 20_000) -> Dict:
        """TV distance between bridge-sampled trees and the exact law of all size-n trees."""
        exact = exact_tree_law(self.dist, n)
        sampler = ConditionedSampler(self.dist, n, method='exact-bridge')
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 9200, n]))
        counts: Dict[tuple, int] = {}
        for _ in range(count):
            key = tuple(sampler.sample(rng).degrees.tolist())
            counts[key] = counts.get(key, 0) + 1
        empirical = {k: v / count for k, v in counts.items()}
        tv = tv_distance(empirical, exact)
        # TV of a multinomial sample has mean about sqrt(k / (2 pi count)) for k cells
        bound = 3.0 * math.sqrt(len(exact) / (2 * math.pi * count))
        return {'n': n, 'count': count, 'tv': tv, 'bound': bound, 'ok': tv <= bound}

    def check_ks_calibration(self, count: int = 1000, reps: int = 300) -> Dict:
        """KS quantile at exact sampling, compared with the configured tolerances."""
        record = calibrate_ks(count, reps, self.seed)
        config = load_config()
        tolerances = {
            'e1.ks_tol': config.experiments.e1.ks_tol,
            'e_cor.ks_tol': config.experiments.e_cor.ks_tol,
        }
        record['tolerances'] = tolerances
        record['ok'] = all(tol >= record['ks_quantile'] for tol in tolerances.values())
        return record

    def generate_report(self) -> bool:
        """Run all checks, print the report and save it as JSON."""
        console.print("\n[bold cyan]Condensation Lab Self-Test[/bold cyan]\n")
        start = time.time()

        with Progress() as progress:
            task = progress.add_task("[cyan]Running self-test...", total=5)

            progress.update(task, description="[cyan]Checking stable sampler...")
            stable = self.check_stable_sampler()
            progress.advance(task)

            progress.update(task, description="[cyan]Checking Kemperman against oracle...")
            kemperman = self.check_kemperman()
            progress.advance(task)

            progress.update(task, description="[cyan]Checking structural identities...")
            structure = self.check_structural_identities()
            progress.advance(task)

            progress.update(task, description="[cyan]Checking bridge sampler against oracle...")
            sampler = self.check_sampler_against_oracle()
            progress.advance(task)

            progress.update(task, description="[cyan]Calibrating KS tolerance...")
            calibration = self.check_ks_calibration()
            progress.advance(task)

        console.print("\n[bold green]═══ Self-Test Report ═══[/bold green]\n")

        stable_table = Table(title="Stable sampler (Laplace transform)")
        stable_table.add_column("alpha", style="cyan")
        stable_table.add_column("lambda", style="cyan")
        stable_table.add_column("Estimate", style="green")
        stable_table.add_column("Target", style="yellow")
        stable_table.add_column("z", style="magenta")
        for row in stable:
            stable_table.add_row(str(row['alpha']), str(row['lambda']), f"{row['estimate']:.5f}",
                                 f"{row['target']:.5f}", f"{row['z']:+.2f}")
        console.print(stable_table)

        worst = max(r['rel_error'] for r in kemperman)
        ok_kemperman = all(r['ok'] for r in kemperman)
        console.print(Panel(
            f"{'✅' if ok_kemperman else '❌'} n = 1..{len(kemperman)} | worst relative error {worst:.2e}",
            title="Kemperman vs oracle", border_style="green" if ok_kemperman else "red"))

        console.print(Panel(
            f"{'✅' if structure['ok'] else '❌'} {structure['trees']} trees | "
            f"{len(structure['failures'])} failures",
            title="Structural identities", border_style="green" if structure['ok'] else "red"))

        console.print(Panel(
            f"{'✅' if sampler['ok'] else '❌'} n = {sampler['n']} | TV {sampler['tv']:.4f} "
            f"(bound {sampler['bound']:.4f})",
            title="Bridge sampler vs oracle", border_style="green" if sampler['ok'] else "red"))

        console.print(Panel(
            f"{'✅' if calibration['ok'] else '❌'} KS q{calibration['quantile']} = "
            f"{calibration['ks_quantile']:.4f} at {calibration['count']} samples",
            title="KS calibration", border_style="green" if calibration['ok'] else "red"))

        passed = (all(r['ok'] for r in stable) and ok_kemperman and structure['ok']
                  and sampler['ok'] and calibration['ok'])

        report_data = {
            'seed': self.seed,
            'passed': passed,
            'seconds': round(time.time() - start, 2),
            'stable_sampler': stable,
            'kemperman': kemperman,
            'structural_identities': structure,
            'sampler_vs_oracle': sampler,
            'ks_calibration': calibration,
        }
        with open(REPORT_PATH, 'w') as f:
            json.dump(report_data, f, indent=2, default=bool)

        console.print(f"\n[green]Detailed report saved to: {REPORT_PATH}[/green]")
        return passed


if __name__ == "__main__":
    checker = LabSelfTest()
    sys.exit(0 if checker.generate_report() else 1)
