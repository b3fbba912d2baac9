"""
Configuration for rdalab experiments

Priority (highest first): command-line flags, config file, environment (.env), defaults.

Config files are flat `key = value` text:

    # comments and blank lines are ignored
    include = base.cfg        # one level only, path relative to this file
    T = 10
    K = 8,16,32,64
    method = both
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from dotenv import load_dotenv

from alarms import ConfigError

logger = logging.getLogger(__name__)

# Load environment variables
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(env_path)

DEFAULT_OUTDIR = os.getenv('RDALAB_OUTDIR', 'results')
DEFAULT_SEED = int(os.getenv('RDALAB_SEED', '20240101'))
DEFAULT_WORKERS = int(os.getenv('RDALAB_WORKERS', '4'))
DEBUG = os.getenv('RDALAB_DEBUG', '0').lower() in ('1', 'true', 'yes')

# Keys understood by at least one experiment, with the type their values are coerced to.
KNOWN_KEYS = {
    # spectral / integration
    'nmax': int, 'dt': float, 't_end': float, 'stride': int, 'padding': float,
    'adaptive': bool, 'system': str, 'samples': int,
    # diffeo / transformed system
    'K': list, 'N': list, 'R': float, 'Rbar': float, 'C_theta': float,
    'resolution_tol': float, 'kappa': float, 't_tail': float,
    # cone
    'mu': float, 'tol': float, 'K_small': int,
    # floquet
    'T': float, 'T_traj': float, 'method': str, 'n_powers': int, 'n_periods': int,
    'nmax_pde': int, 'dt_pde': float, 'T_sweep': list, 'perturbation': float,
    'dt_traj': float, 'nmax_ext': int, 'extended': bool, 'symmetrize': bool,
    'r2_min': float, 'eigen_tol': float,
    # runner
    'experiment': str, 'seed': int, 'outdir': str, 'format': str, 'workers': int,
}

FORMATS = ('csv', 'json', 'both')


def coerce_value(key: str, raw: str, path: Optional[str] = None, line: Optional[int] = None) -> Any:
    kind = KNOWN_KEYS.get(key)
    if kind is None:
        raise ConfigError(f"unknown key '{key}'", path=path, line=line)
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ('true', 'yes', '1', 'on'):
                return True
            if lowered in ('false', 'no', '0', 'off'):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is list:
            return [_number(item) for item in text.split(',') if item.strip()]
        return text
    except ValueError:
        raise ConfigError(f"bad value for '{key}': {raw!r}", path=path, line=line) from None


def _number(text: str) -> Any:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_config_file(path: str, _depth: int = 0) -> dict:
    """Parse a flat key=value config file with one level of include"""
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError("config file not found", path=str(path))

    values: dict = {}
    for lineno, raw_line in enumerate(file_path.read_text().splitlines(), start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", path=str(path), line=lineno)
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError("empty key", path=str(path), line=lineno)

        if key == 'include':
            if _depth >= 1:
                raise ConfigError("nested include is not allowed", path=str(path), line=lineno)
            included = (file_path.parent / value).resolve()
            for inc_key, inc_value in parse_config_file(str(included), _depth + 1).items():
                values.setdefault(inc_key, inc_value)
            continue

        values[key] = coerce_value(key, value, path=str(path), line=lineno)

    return values


@dataclass
class ExperimentConfig:
    """Resolved configuration of one experiment run"""

    experiment: str
    seed: int = DEFAULT_SEED
    outdir: str = DEFAULT_OUTDIR
    fmt: str = 'both'
    workers: int = DEFAULT_WORKERS
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fmt not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}, got {self.fmt!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def get_int(self, key: str, default: int) -> int:
        value = self.params.get(key, default)
        if isinstance(value, list):
            value = value[0]
        return int(value)

    def get_float(self, key: str, default: float) -> float:
        value = self.params.get(key, default)
        if isinstance(value, list):
            value = value[0]
        return float(value)

    def get_list(self, key: str, default: Sequence) -> list:
        value = self.params.get(key, default)
        if not isinstance(value, (list, tuple)):
            value = [value]
        return list(value)

    def get_str(self, key: str, default: str) -> str:
        return str(self.params.get(key, default))

    def get_bool(self, key: str, default: bool) -> bool:
        return bool(self.params.get(key, default))

    def to_dict(self) -> dict:
        return {
            'experiment': self.experiment,
            'seed': self.seed,
            'outdir': self.outdir,
            'format': self.fmt,
            'workers': self.workers,
            'params': dict(sorted(self.params.items())),
        }

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; outdir and workers do not change results"""
        data = self.to_dict()
        data.pop('outdir')
        data.pop('workers')
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(experiment: str, config_path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig.

    Args:
        experiment: subcommand name
        config_path: optional key=value file
        overrides: values given on the command line (None entries are ignored)
    """
    merged: dict = {}
    if config_path:
        merged.update(parse_config_file(config_path))
        logger.debug(f"✅ Loaded config file {config_path} ({len(merged)} keys)")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key '{key}'")
        merged[key] = value

    seed = int(merged.pop('seed', DEFAULT_SEED))
    outdir = str(merged.pop('outdir', DEFAULT_OUTDIR))
    fmt = str(merged.pop('format', 'both'))
    workers = int(merged.pop('workers', DEFAULT_WORKERS))
    merged.pop('experiment', None)

    return ExperimentConfig(experiment=experiment, seed=seed, outdir=outdir, fmt=fmt, workers=workers, params=merged)
