"""Tests for config files, overrides and the resolved ExperimentConfig"""

import pytest

from alarms import ConfigError
from config import DEFAULT_SEED, ExperimentConfig, coerce_value, load_config, parse_config_file


class TestParseConfigFile:
    """key = value files with comments and one include level"""

    def test_types(self, config_file):
        path = config_file("# header\nT = 10\nK = 8,16,32\nmethod = both\nadaptive = true\ndt = 1e-3\n")
        values = parse_config_file(path)
        assert values == {'T': 10.0, 'K': [8, 16, 32], 'method': 'both', 'adaptive': True, 'dt': 1e-3}

    def test_inline_comment_and_blank_lines(self, config_file):
        path = config_file("\n\nnmax = 24   # modes\n")
        assert parse_config_file(path) == {'nmax': 24}

    def test_unknown_key_reports_line(self, config_file):
        path = config_file("T = 10\nbogus = 1\n")
        with pytest.raises(ConfigError, match=r":2: unknown key 'bogus'"):
            parse_config_file(path)

    def test_bad_value_reports_line(self, config_file):
        path = config_file("nmax = many\n")
        with pytest.raises(ConfigError, match=r":1: bad value for 'nmax'"):
            parse_config_file(path)

    def test_malformed_line(self, config_file):
        path = config_file("T 10\n")
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config_file(path)

    def test_include_is_overridden_by_includer(self, config_file):
        config_file("T = 5\nnmax = 8\n", name='base.cfg')
        path = config_file("include = base.cfg\nT = 10\n")
        assert parse_config_file(path) == {'T': 10.0, 'nmax': 8}

    def test_nested_include_rejected(self, config_file):
        config_file("T = 1\n", name='inner.cfg')
        config_file("include = inner.cfg\n", name='middle.cfg')
        path = config_file("include = middle.cfg\n")
        with pytest.raises(ConfigError, match="nested include"):
            parse_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config_file(str(tmp_path / 'nope.cfg'))


class TestLoadConfig:
    """Flags override the file; runner keys are lifted out of params"""

    def test_priority(self, config_file):
        path = config_file("T = 5\nseed = 7\n")
        cfg = load_config('floquet', path, {'T': 10.0, 'nmax': None})
        assert cfg.get_float('T', 0.0) == 10.0
        assert cfg.seed == 7
        assert 'seed' not in cfg.params

    def test_defaults(self):
        cfg = load_config('simulate')
        assert cfg.seed == DEFAULT_SEED
        assert cfg.fmt == 'both'

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown key"):
            load_config('simulate', None, {'warp': 9})

    def test_bad_format(self):
        with pytest.raises(ConfigError, match="format must be one of"):
            load_config('simulate', None, {'format': 'xml'})


class TestExperimentConfig:
    """Typed accessors and the config hash"""

    def test_accessors(self):
        cfg = ExperimentConfig('cone', params={'K': [32, 64], 'tol': 1e-6, 'extended': False})
        assert cfg.get_int('K', 8) == 32
        assert cfg.get_list('K', []) == [32, 64]
        assert cfg.get_list('N', 8) == [8]
        assert cfg.get_bool('extended', True) is False
        assert cfg.get_str('system', 'sine-advection') == 'sine-advection'

    def test_hash_ignores_outdir_and_workers(self):
        a = ExperimentConfig('floquet', seed=1, outdir='a', workers=1, params={'T': 10.0})
        b = ExperimentConfig('floquet', seed=1, outdir='b', workers=8, params={'T': 10.0})
        c = ExperimentConfig('floquet', seed=2, outdir='a', workers=1, params={'T': 10.0})
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_workers_positive(self):
        with pytest.raises(ConfigError, match="workers must be positive"):
            ExperimentConfig('simulate', workers=0)

    def test_coerce_value_list(self):
        assert coerce_value('T_sweep', '2.5, 5,10') == [2.5, 5, 10]
