"""Command-line interface.

    cfmfdtd run      --config run.toml
    cfmfdtd ladder   --config run.toml --h-list 1/20,1/28,1/40
    cfmfdtd jumps    --config run.toml --tf 1.0
    cfmfdtd longtime --config run.toml --T 25

The config file holds ``RunConfig`` fields either at top level or in a
``[run]`` table.  Exit codes: 0 success, 2 blow-up, 3 config error.
"""

import argparse
import dataclasses
import logging
import sys
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import harness
from .jumpcheck import write_jump_csv

EXIT_OK, EXIT_BLOWUP, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("cfmfdtd")


def load_config(path):
    """``RunConfig`` from a TOML file (fields at top level or under ``[run]``)."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise harness.ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise harness.ConfigError(f"invalid TOML in {path}: {exc}") from exc
    data = dict(data.get("run", data))
    names = {f.name for f in dataclasses.fields(harness.RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise harness.ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "h" in data:
        data["h"] = parse_h(data["h"])
    cfg = harness.RunConfig(**data)
    cfg.resolved()
    return cfg


def parse_h(value):
    """``0.05``, ``"1/20"`` or ``20`` (a cell count) -> mesh size."""
    if isinstance(value, str):
        try:
            value = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise harness.ConfigError(f"bad mesh size {value!r}") from exc
    value = float(value)
    if value <= 0:
        raise harness.ConfigError(f"mesh size must be positive, got {value}")
    return 1.0 / value if value >= 1 else value


def parse_h_list(text):
    return [parse_h(v) for v in text.split(",") if v.strip()]


def _out(cfg, name):
    return Path(cfg.output_dir) / name


def cmd_run(cfg, args):
    res = harness.run(cfg, progress=args.verbose)
    print(" ".join(f"{k}={v:.6e}" for k, v in res.errors.items()))
    path = _out(cfg, "errors.csv")
    report = harness.ConvergenceReport(res.config, [res.config.h], [res.errors], float("nan"))
    harness.write_errors_csv(report, path)
    return EXIT_OK


def _default_ladder(cfg):
    return harness.YEE_LADDER if cfg.resolved().scheme == "cfm-yee" else harness.FOURTH_LADDER


def cmd_ladder(cfg, args):
    if args.paper_ladder:
        hs = list(harness.PAPER_LADDER)
    else:
        hs = parse_h_list(args.h_list) if args.h_list else list(_default_ladder(cfg))
    report = harness.convergence_ladder(cfg, hs, out=_out(cfg, "errors.csv"))
    for h, e in report.rows():
        print(f"h={h:.6g} " + ("failed" if e is None else f"total={e['total']:.6e}"))
    print(f"slope={report.slope:.4f}")
    return EXIT_BLOWUP if any(e is None for e in report.errors) else EXIT_OK


def cmd_jumps(cfg, args):
    hs = parse_h_list(args.h_list) if args.h_list else list(_default_ladder(cfg))
    report = harness.convergence_ladder(cfg, hs, out=_out(cfg, "errors.csv"), jumps=True, tf=args.tf)
    write_jump_csv(hs, report.jumps, _out(cfg, "jumps.csv"), header=harness.config_header(report.config))
    for q, s in sorted(report.jump_slopes.items()):
        print(f"order={q} slope={s:.4f}")
    return EXIT_BLOWUP if any(t is None for t in report.jumps) else EXIT_OK


def cmd_longtime(cfg, args):
    res = harness.long_time(cfg, T=args.T, every=args.every, out=_out(cfg, "longtime.csv"))
    if res.blew_up:
        print(f"blow-up before T={args.T}", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"final total error={res.errors['total']:.6e}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cfmfdtd", description="CFM-FDTD solvers for TM_z interface problems")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="TOML file with RunConfig fields")
        sp.set_defaults(func=func)
        return sp

    add("run", cmd_run, "single run, errors at T")
    sp = add("ladder", cmd_ladder, "convergence ladder")
    sp.add_argument("--h-list", help="comma-separated mesh sizes, e.g. 1/20,1/28,1/40")
    sp.add_argument("--paper-ladder", action="store_true", help="use the paper's full ladder down to 1/460")
    sp = add("jumps", cmd_jumps, "jump-condition convergence")
    sp.add_argument("--h-list")
    sp.add_argument("--tf", type=float, default=1.0)
    sp = add("longtime", cmd_longtime, "long-time stability run")
    sp.add_argument("--T", type=float, default=25.0)
    sp.add_argument("--every", type=int, default=10, help="error cadence in steps")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.BlowUpError as exc:
        print(f"blow-up: {exc.args[0]}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
