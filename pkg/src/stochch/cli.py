"""Command line entry point: ``stochch <command> CONFIG [--set key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import __version__, ch, ms
from .config import OUTPUT_ROOT_ENV, ConfigError, load
from .experiments import RealizationFailed, resume, run, run_ms

log = logging.getLogger("stochch")

# command -> experiments it accepts
COMMANDS = {
    "ch-run": ("one_circle", "two_circles", "custom"),
    "ms-run": None,
    "compare": ("ch_vs_ms",),
    "sweep": ("gamma_sweep", "one_circle"),
    "spectral": ("spectral_check",),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stochch",
        description="Stochastic Cahn-Hilliard / Mullins-Sekerka experiments. "
                    f"Outputs go under ${OUTPUT_ROOT_ENV} if set, else the config's `output`.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", help="TOML experiment file")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (section.key for tables)")
    r = sub.add_parser("resume", help="continue an interrupted run directory")
    r.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        if args.command == "resume":
            result = resume(args.run_dir)
        else:
            cfg = load(args.config, args.overrides)
            allowed = COMMANDS[args.command]
            if args.command == "ms-run":
                result = run_ms(cfg)
            elif cfg.experiment not in allowed:
                raise ConfigError(f"`{args.command}` runs {', '.join(allowed)}; "
                                  f"config has experiment = {cfg.experiment!r}")
            else:
                result = run(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RealizationFailed, ch.NewtonError, ms.MsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.run_dir)
    for f in result.failures:
        print(f"failed realization: {f}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
