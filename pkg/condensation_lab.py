#!/usr/bin/env python3
"""
condensation-lab CLI - sample conditioned trees, query exact small-n laws and
run the verification experiments
"""

import csv
import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from errors import LabError
from experiments import ExperimentRunner, calibrate_ks
from models import ALLOWED_METHODS, ALLOWED_TABLE_MODES, EXPERIMENT_IDS
from oracle import MAX_N, exact_conditional_law
from samplers import ConditionedSampler, sample_condensation_approx
from settings import load_config, resolve_distribution, setup_logging
from tree import encode_varints, stats as tree_stats, to_csv_row

console = Console()

EXIT_CHECK_FAILED = 1
EXIT_LAB_ERROR = 2


def handle_errors(func):
    """Turn LabError into a red message and exit status 2."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except LabError as e:
            console.print(f"[red]Error ({type(e).__name__}): {e}[/red]")
            sys.exit(EXIT_LAB_ERROR)
    return wrapper


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='config.json to use (default: the one next to this file)')
@click.option('--seed', type=int, default=None, help='Master seed (overrides run.seed)')
@click.option('--log-level', default=None, help='Console log level (default WARNING)')
@click.pass_context
def cli(ctx, config_path, seed, log_level):
    """Condensation Lab - subcritical Galton-Watson trees conditioned on their size"""
    try:
        config = load_config(config_path)
    except LabError as e:
        console.print(f"[red]Error ({type(e).__name__}): {e}[/red]")
        sys.exit(EXIT_LAB_ERROR)
    setup_logging(config.logging, console_level=log_level)
    ctx.obj = {'config': config, 'seed': config.run.seed if seed is None else seed}


@cli.command()
@click.option('--dist', 'dist_name', required=True, help='Configured name or inline JSON spec')
@click.option('--n', type=int, required=True, help='Tree size')
@click.option('--count', type=int, default=1, show_default=True, help='Number of trees')
@click.option('--method', type=click.Choice(ALLOWED_METHODS), default='auto', show_default=True)
@click.option('--table-mode', type=click.Choice(ALLOWED_TABLE_MODES), default=None,
              help='Bridge table layout (default from config)')
@click.option('--table-cache', type=click.Path(file_okay=False), default=None,
              help='Directory for cached bridge tables')
@click.option('--format', 'fmt', type=click.Choice(['csv', 'varint']), default='csv', show_default=True)
@click.option('--out', '--output', 'out', type=click.Path(dir_okay=False), default=None,
              help='Output file (default <run.out>/trees.csv or trees.bin)')
@click.option('--summary', is_flag=True, help='Print a table of per-tree statistics')
@click.pass_context
@handle_errors
def sample(ctx, dist_name, n, count, method, table_mode, table_cache, fmt, out, summary):
    """Draw trees of size n and write their degree sequences"""
    config = ctx.obj['config']
    seed = ctx.obj['seed']
    dist = resolve_distribution(config, dist_name)
    sampling = config.sampling

    if method == 'approx':
        console.print(Panel("[yellow]Approximate sampler: trees are NOT exact draws of the "
                            "conditioned law[/yellow]", title="Warning", border_style="yellow"))
        draw = functools.partial(sample_condensation_approx, dist, n,
                                 max_retries=sampling.approx_max_retries)
    else:
        cache = table_cache or sampling.table_cache
        with console.status(f"[bold green]Preparing {method} sampler for n={n}..."):
            sampler = ConditionedSampler(
                dist, n, method=method,
                rejection_max_n=sampling.rejection_max_n,
                rejection_max_tries=sampling.rejection_max_tries,
                eps_trunc=sampling.eps_trunc, use_fft=sampling.use_fft,
                table_mode=table_mode or sampling.table_mode, leaf_size=sampling.leaf_size,
                memory_budget_mb=sampling.memory_budget_mb,
                cache_dir=Path(cache) if cache else None,
            )
        draw = sampler.sample

    trees = []
    with console.status(f"[bold green]Sampling {count} trees..."):
        for r in range(count):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0, 0, r]))
            trees.append(draw(rng))

    default_name = 'trees.csv' if fmt == 'csv' else 'trees.bin'
    path = Path(out) if out else Path(config.run.out) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'csv':
        with open(path, 'w') as f:
            for t in trees:
                f.write(to_csv_row(t) + '\n')
    else:
        with open(path, 'wb') as f:
            for t in trees:
                f.write(encode_varints(t))
    console.print(f"[green]✓ Wrote {count} trees of size {n} to {path}[/green]")

    if summary:
        table = Table(title=f"Trees of size {n}")
        for column in ("#", "Delta", "D_n", "U", "|u*|", "height", "max xi"):
            table.add_column(column, justify="right")
        for i, t in enumerate(trees):
            s = tree_stats(t)
            table.add_row(str(i), str(s.delta), str(s.second_degree), str(s.u_star_index),
                          str(s.u_star_generation), str(s.height), str(s.xi_max))
        console.print(table)


@cli.command()
@click.option('--dist', 'dist_name', required=True, help='Configured name or inline JSON spec')
@click.option('--n', type=int, required=True, help=f'Tree size (1..{MAX_N})')
@click.option('--statistic', required=True,
              help="delta, second_degree, u_index, u_generation, height, xi_max, pivot_I, "
                   "root_degree, subtree_pair, H:i, Z:j, or a comma-separated joint")
@click.option('--out', '--output', 'out', type=click.Path(dir_okay=False), default=None,
              help='Write the pmf as CSV')
@click.pass_context
@handle_errors
def oracle(ctx, dist_name, n, statistic, out):
    """Exact conditional law of a statistic by enumeration"""
    dist = resolve_distribution(ctx.obj['config'], dist_name)
    with console.status(f"[bold green]Enumerating trees of size {n}..."):
        law = exact_conditional_law(dist, n, statistic)

    table = Table(title=f"P({statistic} = v | |tau| = {n})")
    table.add_column("Value", style="cyan")
    table.add_column("Probability", style="magenta", justify="right")
    for value, p in law.pmf.items():
        table.add_row(str(value), f"{p:.12g}")
    console.print(table)
    console.print(f"P(|tau| = {n}) = {law.size_probability:.12g}")

    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['value', 'probability'])
            for value, p in law.pmf.items():
                writer.writerow([json.dumps(value) if isinstance(value, tuple) else value, repr(p)])
        console.print(f"[green]✓ Wrote {out}[/green]")


@cli.command()
@click.argument('experiment_ids', nargs=-1)
@click.option('--threads', type=int, default=None, help='Worker processes (default from config)')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory')
@click.option('--table-cache', type=click.Path(file_okay=False), default=None,
              help='Directory for cached bridge tables')
@click.pass_context
@handle_errors
def exp(ctx, experiment_ids, threads, out, table_cache):
    """Run experiments (all enabled ones when no id is given)"""
    config = ctx.obj['config']
    unknown = [i for i in experiment_ids if i not in EXPERIMENT_IDS]
    if unknown:
        raise click.BadParameter(f"{unknown}; choose from {EXPERIMENT_IDS}", param_hint='EXPERIMENT_IDS')
    runner = ExperimentRunner(
        config, out_dir=Path(out) if out else None, seed=ctx.obj['seed'], threads=threads,
        table_cache=Path(table_cache) if table_cache else None,
    )
    with console.status("[bold green]Running experiments..."):
        reports = runner.run(list(experiment_ids) or None)

    table = Table(title=f"Checks (seed {runner.seed})")
    table.add_column("Experiment", style="cyan")
    table.add_column("Check")
    table.add_column("Estimate", justify="right")
    table.add_column("Target", justify="right")
    table.add_column("Tol", justify="right")
    table.add_column("Verdict")
    for report in reports:
        for check in report.checks:
            verdict = "[green]PASS[/green]" if check.verdict else "[red]FAIL[/red]"
            table.add_row(report.experiment_id, check.check_id, f"{check.estimate:.4g}",
                          f"{check.target:.4g}", f"{check.tolerance:.3g} ({check.comparison})", verdict)
    console.print(table)

    failed = [c.check_id for r in reports for c in r.checks if not c.verdict]
    summary = (f"📊 Experiments: {len(reports)}\n"
               f"✅ Passed checks: {sum(len(r.checks) for r in reports) - len(failed)}\n"
               f"❌ Failed checks: {len(failed)}\n"
               f"📁 Report: {runner.out_dir / 'report.json'}")
    console.print(Panel(summary, title="Summary", border_style="red" if failed else "green"))
    if failed:
        sys.exit(EXIT_CHECK_FAILED)


@cli.command()
@click.option('--count', type=int, default=1000, show_default=True, help='Sample size per KS test')
@click.option('--reps', type=int, default=500, show_default=True, help='Repetitions')
@click.option('--quantile', type=float, default=0.999, show_default=True)
@click.pass_context
@handle_errors
def calibrate(ctx, count, reps, quantile):
    """Quantile of the KS distance under exact sampling, for choosing ks_tol"""
    with console.status("[bold green]Calibrating KS tolerance..."):
        record = calibrate_ks(count, reps, ctx.obj['seed'], quantile=quantile)
    console.print_json(json.dumps(record))


def main(argv: Optional[list] = None):
    cli(args=argv)


if __name__ == '__main__':
    main()
