"""Tests for the experiment runner and the command line"""

import json

import pytest

import experiments
from alarms import DivergenceError
from config import load_config
from experiments import run_experiment
from main import build_parser, main, overrides_from


def read_manifest(outdir, experiment):
    return json.loads((outdir / experiment / 'manifest.json').read_text())


class TestParser:
    """Flags become typed config overrides"""

    def test_overrides_are_coerced(self):
        args = build_parser().parse_args(['diffeo-probe', '--K', '8,16', '--R', '2.5', '--seed', '7'])
        overrides = overrides_from(args)
        assert overrides == {'K': [8, 16], 'R': 2.5, 'seed': 7}

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['bake'])


class TestRunner:
    """run_experiment always leaves a manifest"""

    def test_simulate_linear_heat(self, tmp_path):
        code = main(['simulate', '--system', 'linear-heat', '--nmax', '8', '--t_end', '0.1',
                     '--outdir', str(tmp_path), '--workers', '1'])
        assert code == 0
        manifest = read_manifest(tmp_path, 'simulate')
        assert manifest['exit_code'] == 0
        assert manifest['alarms'] == []
        assert {'trajectory.csv', 'norms.csv', 'dissipativity.json', 'summary.json'} <= set(manifest['outputs'])
        assert manifest['summary']['exact_error'] < 1e-10
        assert manifest['summary']['violated'] is False
        assert manifest['summary']['support_ok'] is True

    def test_alarm_sets_the_exit_code(self, tmp_path, monkeypatch):
        def diverge(cfg, store):
            store.write_json('summary', {})
            raise DivergenceError("non-finite state", t=0.5)

        monkeypatch.setitem(experiments.EXPERIMENTS, 'simulate', diverge)
        config = load_config('simulate', overrides={'outdir': str(tmp_path)})
        assert run_experiment(config) == 3
        manifest = read_manifest(tmp_path, 'simulate')
        assert manifest['outputs'] == ['summary.json']
        assert manifest['alarms'][0]['code'] == 'divergence'
        assert manifest['alarms'][0]['t'] == 0.5

    def test_unexpected_failure(self, tmp_path, monkeypatch):
        def explode(cfg, store):
            raise RuntimeError("boom")

        monkeypatch.setitem(experiments.EXPERIMENTS, 'simulate', explode)
        config = load_config('simulate', overrides={'outdir': str(tmp_path)})
        assert run_experiment(config) == 1
        manifest = read_manifest(tmp_path, 'simulate')
        assert "RuntimeError: boom" in manifest['alarms'][0]['message']

    def test_bad_config_file(self, tmp_path, config_file):
        path = config_file("nmax = 8\nwobble = 1\n")
        assert main(['simulate', '--config', path, '--outdir', str(tmp_path)]) == 2
        assert not (tmp_path / 'simulate').exists()

    def test_bad_flag_value(self, tmp_path):
        assert main(['simulate', '--nmax', 'eight', '--outdir', str(tmp_path)]) == 2

    def test_report(self, tmp_path, capsys):
        assert main(['report', '--outdir', str(tmp_path)]) == 2
        main(['simulate', '--system', 'linear-heat', '--nmax', '8', '--t_end', '0.05', '--outdir', str(tmp_path)])
        capsys.readouterr()
        assert main(['report', '--outdir', str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[1].startswith("simulate")

    @pytest.mark.slow
    def test_floquet_small(self, tmp_path):
        code = main(['floquet', '--T', '10', '--nmax', '6', '--method', 'block-ODE', '--extended', 'false',
                     '--n_periods', '2', '--dt_traj', '1e-3', '--r2_min', '0.99',
                     '--outdir', str(tmp_path), '--workers', '2'])
        assert code == 0
        summary = read_manifest(tmp_path, 'floquet')['summary']
        assert summary['structure_passed'] is True
        assert summary['structural_radius'] == 0.0
        assert summary['cubic_law_passed'] is True
        assert summary['raw_eigen_radius'] < 1e-8
        assert summary['printed_nu_consistent'] is False
