"""Command line for the simulator (subcommands run, preset, validate, bounds, sweep).

Exit codes: 0 when every replication completed and every requested
validator passed, 1 when a run diverged or a validator failed, 2 for
configuration or input errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as config_mod
from .errors import ConfigError, DatasetFormatError, GBMAError
from .presets import PRESETS, load_preset, preset_text

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key; repeatable")
    p.add_argument("--no-plot", action="store_true", help="skip PNG figures")


def build_parser():
    parser = argparse.ArgumentParser(prog="gbma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config file")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("preset", help="run a named preset (or --list / --show)")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="list the presets")
    p.add_argument("--show", action="store_true", help="print the preset config and exit")
    _common(p)

    p = sub.add_parser("validate", help="constants, stepsize feasibility and validators, no runs")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("bounds", help="write bound curves only")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("sweep", help="run a config over several values of one key")
    p.add_argument("config")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, nargs="+")
    _common(p)
    return parser


def _load(args):
    cfg = load_preset(args.name) if args.command == "preset" else config_mod.load(args.config)
    if args.command == "sweep":
        values = ",".join(v.strip(",") for v in args.values)
        args.overrides += [f"sweep.param={args.param}", f"sweep.values={values}"]
    if args.overrides:
        cfg = cfg.with_overrides(args.overrides)
    return cfg


def _print_checks(checks, out):
    for c in checks:
        print(f"  check {c.name}: {'pass' if c.passed else 'FAIL'} ({c.detail})", file=out)


def cmd_run(cfg, args, out):
    from .report import run

    summary = run(cfg, out_dir=args.out, plot=False if args.no_plot else None)
    for p in summary.points:
        line = f"{p.label or cfg['name']}: {p.stats.reps} reps, {p.n_diverged} diverged"
        print(line + f", final mean excess risk {p.stats.excess_mean[-1]:.6g}", file=out)
        _print_checks(p.checks, out)
    if summary.energy_rows is not None:
        for r in summary.energy_rows:
            state = f"energy {r.total_energy:.6g} at k={r.k_hit}" if r.reached else "target not reached"
            print(f"  N={r.N}: {state}, plateau {r.floor_estimate:.3g}", file=out)
        print(f"  replications with strictly decreasing energy: {summary.vote:.2f}", file=out)
    for f in summary.files:
        print(f"wrote {f}", file=out)
    return EXIT_OK if summary.ok else EXIT_FAIL


def cmd_validate(cfg, args, out):
    from .report import run_checks, sweep_points
    from .resolve import check_derived, resolve

    ok = True
    for label, pc in sweep_points(cfg):
        res = resolve(pc)
        check_derived(pc, res)
        print(f"[{label or cfg['name']}]", file=out)
        for k, v in res.derived.items():
            print(f"  {k} = {v}", file=out)
        checks = run_checks(res)
        _print_checks(checks, out)
        ok &= all(c.passed for c in checks)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bounds(cfg, args, out):
    from .report import atomic_write, bound_table, render_bounds_csv

    out_dir = args.out or cfg["output.dir"]
    for label, (ks, cols, res) in bound_table(cfg).items():
        name = cfg["name"] + (f"__{label}" if label else "")
        path = os.path.join(out_dir, f"{name}__bounds.csv")
        atomic_write(path, render_bounds_csv(ks, cols))
        present = [k for k, v in cols.items() if v is not None] or ["none"]
        print(f"wrote {path} ({', '.join(present)})", file=out)
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if args.command == "preset":
        if args.list or not args.name:
            for name in sorted(PRESETS):
                print(f"{name}: {load_preset(name)['figure']}", file=out)
            return EXIT_OK
        if args.show:
            try:
                print(preset_text(args.name), end="", file=out)
            except KeyError as exc:
                print(f"error: {exc.args[0]}", file=sys.stderr)
                return EXIT_CONFIG
            return EXIT_OK
    try:
        cfg = _load(args)
        if args.command == "validate":
            return cmd_validate(cfg, args, out)
        if args.command == "bounds":
            return cmd_bounds(cfg, args, out)
        return cmd_run(cfg, args, out)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DatasetFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GBMAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
