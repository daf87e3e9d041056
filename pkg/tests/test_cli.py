"""Command-line tests through click's CliRunner."""

import json

import pytest
from click.testing import CliRunner

from src.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def document(minimal_document):
    minimal_document["systems"]["B"] = {"conjugate_of": "A", "gains": "g"}
    minimal_document["experiments"].append({"id": "ab", "kind": "commute", "a": "A", "b": "B"})
    return minimal_document


def test_version(runner):
    result = runner.invoke(main, ['--version'])
    assert result.exit_code == 0
    assert 'ltv-lab' in result.output


def test_validate_ok(runner, write_config, document):
    result = runner.invoke(main, ['validate', '--config', str(write_config(document))])
    assert result.exit_code == EXIT_OK
    assert "2 experiment(s)" in result.output


def test_validate_missing_reference(runner, write_config, document):
    document["experiments"].append({"kind": "commute", "a": "A", "b": "Z"})
    result = runner.invoke(main, ['validate', '--config', str(write_config(document))])
    assert result.exit_code == EXIT_CONFIG
    assert "'Z'" in result.output


def test_validate_missing_file(runner, tmp_path):
    result = runner.invoke(main, ['validate', '--config', str(tmp_path / "absent.json")])
    assert result.exit_code == EXIT_CONFIG


def test_run_and_plot(runner, write_config, document, tmp_path):
    out_dir = tmp_path / "out"
    result = runner.invoke(main, [
        'run', '--config', str(write_config(document)), '--out', str(out_dir), '--step', '0.01',
    ])
    assert result.exit_code == EXIT_OK, result.output
    assert "Commutative" in result.output

    report = json.loads((out_dir / "report.json").read_text())
    assert [e['id'] for e in report['experiments']] == ['01-theorem1', 'ab']
    assert report['settings']['solver']['step'] == 0.01

    plots = tmp_path / "plots-only"
    result = runner.invoke(main, [
        'plot', '--report', str(out_dir / "report.json"), '--experiment', 'ab', '--out', str(plots),
    ])
    assert result.exit_code == EXIT_OK, result.output
    assert len(list((plots / "plots").glob("ab-*.csv"))) == 4


def test_run_rejects_bad_step(runner, write_config, document, tmp_path):
    result = runner.invoke(main, [
        'run', '--config', str(write_config(document)), '--out', str(tmp_path / "out"), '--step', '0.3',
    ])
    assert result.exit_code == EXIT_CONFIG


def test_plot_wrong_kind(runner, write_config, document, tmp_path):
    out_dir = tmp_path / "out"
    runner.invoke(main, ['run', '--config', str(write_config(document)), '--out', str(out_dir),
                         '--step', '0.01'])
    result = runner.invoke(main, [
        'plot', '--report', str(out_dir / "report.json"), '--experiment', '01-theorem1',
        '--out', str(tmp_path),
    ])
    assert result.exit_code == EXIT_FAILURE
