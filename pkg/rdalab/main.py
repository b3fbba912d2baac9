"""
rdalab command line

    python rdalab/main.py floquet --T 10 --nmax 24 --method both
    python rdalab/main.py diffeo-probe --K 8,16,32,64
    python rdalab/main.py simulate --system linear-heat
    python rdalab/main.py report --outdir results

Exit status: 0 pass, 2 configuration error, 3 numerical alarm, 4 structural alarm, 1 otherwise.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from alarms import RDALabError
from config import DEBUG, FORMATS, KNOWN_KEYS, coerce_value, load_config
from experiments import EXPERIMENTS, run_experiment, run_report

logger = logging.getLogger(__name__)

RUNNER_KEYS = ('experiment', 'seed', 'outdir', 'format', 'workers')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="key = value config file")
    common.add_argument('--seed', type=int)
    common.add_argument('--outdir')
    common.add_argument('--workers', type=int)
    common.add_argument('--format', choices=FORMATS, dest='format')
    common.add_argument('--verbose', action='store_true', help="debug logging")
    # every config key is also a flag; values are coerced like config-file values
    for key in KNOWN_KEYS:
        if key not in RUNNER_KEYS:
            common.add_argument(f'--{key}', dest=key, metavar=KNOWN_KEYS[key].__name__.upper())

    parser = argparse.ArgumentParser(prog='rdalab', description="Spectral lab for 1D periodic RDA systems")
    sub = parser.add_subparsers(dest='command', required=True)
    for name in (*EXPERIMENTS, 'report'):
        sub.add_parser(name, parents=[common])
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    """Flag values coerced to their config types; unset flags are left out"""
    overrides = {}
    for key in KNOWN_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        overrides[key] = value if key in RUNNER_KEYS else coerce_value(key, value)
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose or DEBUG else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        config = load_config(args.command, args.config, overrides_from(args))
        if args.command == 'report':
            print(run_report(config))
            return 0
    except RDALabError as e:
        logger.error(f"❌ {e.code}: {e.message}")
        return e.exit_code

    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
