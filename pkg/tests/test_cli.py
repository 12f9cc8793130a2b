"""Tests for the command line entry points."""

import csv
import json

import pytest
from click.testing import CliRunner

from condensation_lab import EXIT_LAB_ERROR, cli
from tree import decode_varints, from_csv_row


@pytest.fixture
def config_file(tmp_path):
    """Small tables and a log file inside tmp_path."""
    small = {"mean": 0.5, "kmax": 2000}
    data = {
        "logging": {"level": "INFO", "file": str(tmp_path / "logs" / "lab.log")},
        "distributions": {
            "heavy_2_5": {"theta": 2.5, **small},
            "heavy_1_5": {"theta": 1.5, **small},
            "heavy_3": {"theta": 3.0, **small},
        },
        "run": {"seed": 99, "out": str(tmp_path / "out")},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def invoke(config_file, *args):
    return CliRunner().invoke(cli, ['--config', str(config_file), *args])


def test_sample_csv(config_file, tmp_path):
    """CSV output has one tree of size n per line and is reproducible."""
    out = tmp_path / "a.csv"
    result = invoke(config_file, 'sample', '--dist', 'heavy_2_5', '--n', '50', '--count', '3',
                    '--out', str(out), '--summary')
    assert result.exit_code == 0, result.output
    assert "Trees of size 50" in result.output
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert all(from_csv_row(line).size == 50 for line in lines)

    again = tmp_path / "b.csv"
    # --output is kept as an alias of --out
    invoke(config_file, 'sample', '--dist', 'heavy_2_5', '--n', '50', '--count', '3',
           '--output', str(again))
    assert again.read_text() == out.read_text()


def test_sample_varint_default_path(config_file, tmp_path):
    """Varint output goes to <out>/trees.bin and decodes tree by tree."""
    result = invoke(config_file, 'sample', '--dist', '{"theta": 3.0, "mean": 0.5, "kmax": 1000}',
                    '--n', '120', '--count', '2', '--format', 'varint')
    assert result.exit_code == 0, result.output
    data = (tmp_path / "out" / "trees.bin").read_bytes()
    first, pos = decode_varints(data)
    second, end = decode_varints(data, pos)
    assert first.size == second.size == 120
    assert end == len(data)


def test_sample_approx_warns(config_file, tmp_path):
    """The approximate method prints a warning and still writes trees."""
    out = tmp_path / "approx.csv"
    result = invoke(config_file, 'sample', '--dist', 'heavy_2_5', '--n', '300', '--method', 'approx',
                    '--out', str(out))
    assert result.exit_code == 0, result.output
    assert "NOT exact" in result.output
    assert from_csv_row(out.read_text().strip()).size == 300


def test_oracle_writes_pmf(config_file, tmp_path):
    """Exact law of Delta at n = 3 has two values summing to one."""
    out = tmp_path / "delta.csv"
    result = invoke(config_file, 'oracle', '--dist', 'heavy_2_5', '--n', '3', '--statistic', 'delta',
                    '--out', str(out))
    assert result.exit_code == 0, result.output
    assert "P(|tau| = 3)" in result.output
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert sorted(r['value'] for r in rows) == ['1', '2']
    assert sum(float(r['probability']) for r in rows) == pytest.approx(1.0)


@pytest.mark.parametrize("args", [
    ('oracle', '--dist', 'heavy_2_5', '--n', '20', '--statistic', 'delta'),
    ('oracle', '--dist', 'heavy_2_5', '--n', '5', '--statistic', 'diameter'),
    ('sample', '--dist', 'heavy_9', '--n', '10'),
])
def test_lab_errors_exit_two(config_file, args):
    """Toolkit errors print a message and exit with status 2."""
    result = invoke(config_file, *args)
    assert result.exit_code == EXIT_LAB_ERROR
    assert "Error" in result.output


def test_unknown_experiment_id(config_file):
    """Experiment ids are checked before anything runs."""
    result = invoke(config_file, 'exp', 'E9')
    assert result.exit_code == 2
    assert "E9" in result.output


def test_missing_config(tmp_path):
    """An explicit config path that does not exist is an error."""
    result = CliRunner().invoke(cli, ['--config', str(tmp_path / "nope.json"), 'calibrate'])
    assert result.exit_code == EXIT_LAB_ERROR


def test_calibrate(config_file):
    """calibrate prints its record as JSON."""
    result = invoke(config_file, 'calibrate', '--count', '50', '--reps', '5')
    assert result.exit_code == 0, result.output
    assert '"calibration_id": "ks-50-5-99"' in result.output
