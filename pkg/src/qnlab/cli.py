"""Command-line entry point.

Subcommands: ``run`` (one preset at a single eps), ``sweep`` (full eps
list with rate fits), ``fit`` (power-law fit of a CSV column against eps),
``plot`` (regenerate figures from a CSV), ``scale`` (print dimensionless
groups for a physical preset or YAML of SI values).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from .harness import (
    ExperimentConfig,
    SweepResult,
    emit_plots,
    fit_rate,
    measure_wave_speed,
    read_csv,
    run_preset,
)
from .scaling import PHYSICAL_PRESETS, derive_groups, physical_preset


def _load_config(spec: str) -> ExperimentConfig:
    if os.path.exists(spec):
        return ExperimentConfig.from_yaml(spec)
    return ExperimentConfig.preset(spec)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epsilon_list:
        cfg.epsilon = sorted((float(e) for e in args.epsilon_list), reverse=True)
    return cfg.validate()


def _print_result(result: SweepResult) -> None:
    for name, f in result.fits.items():
        lo, hi = f.ci95
        print(f"fit {name}: exponent {f.exponent:+.4f} "
              f"(95% CI [{lo:+.3f}, {hi:+.3f}], rms {f.residual:.2e}, "
              f"n={f.n_points})")
    for name, ok in result.checks.items():
        print(f"check {name}: {'PASS' if ok else 'FAIL'}")


def cmd_run(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.epsilon = [cfg.epsilon[0] if args.epsilon is None else args.epsilon]
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{cfg.name}.csv")
    result = run_preset(cfg, csv_path=csv_path, workers=1)
    print(f"wrote {csv_path} ({len(result.rows)} rows)")
    _print_result(result)
    emit_plots(result, args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{cfg.name}.csv")
    result = run_preset(cfg, csv_path=csv_path, workers=args.workers)
    print(f"wrote {csv_path} ({len(result.rows)} rows)")
    _print_result(result)
    if cfg.closure == "euler-poisson":
        for eps in cfg.epsilon:
            ex = result.extras[eps]
            speed = measure_wave_speed(ex["wave_series"], ex["wavenumber"])
            target = float(np.sqrt(ex["temperature"] + 1.0))
            print(f"eps={eps:g}: wave speed {speed:.5f} "
                  f"(quasineutral sound speed {target:.5f})")
    emit_plots(result, args.out)
    return 0


def cmd_fit(args) -> int:
    rows = read_csv(args.csv)
    eps_values = sorted({r["epsilon"] for r in rows}, reverse=True)
    at_time = args.at_time
    values = []
    for e in eps_values:
        series = [(abs(r["time"] - at_time), r[args.column])
                  for r in rows if r["epsilon"] == e]
        values.append(min(series)[1])
    f = fit_rate(eps_values, values)
    lo, hi = f.ci95
    print(f"{args.column} at t={at_time:g}: exponent {f.exponent:+.4f} "
          f"(95% CI [{lo:+.3f}, {hi:+.3f}], rms {f.residual:.2e})")
    return 0


def cmd_plot(args) -> int:
    rows = read_csv(args.csv)
    cfg = ExperimentConfig(name=os.path.splitext(os.path.basename(args.csv))[0])
    result = SweepResult(cfg, rows=rows, histories={})
    eps_values = sorted({r["epsilon"] for r in rows}, reverse=True)
    if len(eps_values) >= 4:
        finals = [result.series(e, "total")[-1] for e in eps_values]
        try:
            result.fits["h_final"] = fit_rate(eps_values, finals)
        except Exception:
            pass
    written = emit_plots(result, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_scale(args) -> int:
    if args.preset in PHYSICAL_PRESETS:
        cfg = physical_preset(args.preset, convention=args.convention)
    elif os.path.exists(args.preset):
        with open(args.preset) as fh:
            data = yaml.safe_load(fh)
        cfg = derive_groups(convention=args.convention, **data)
    else:
        print(f"unknown physical preset {args.preset!r}; "
              f"have {sorted(PHYSICAL_PRESETS)}", file=sys.stderr)
        return 2
    print(cfg.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnlab",
                                description="quasineutral-limit laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--epsilon-list", nargs="*", default=None,
                        help="override the preset's epsilon values")

    sp = sub.add_parser("run", help="run a preset at a single epsilon")
    sp.add_argument("config", help="preset name or YAML path")
    sp.add_argument("--epsilon", type=float, default=None)
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the full epsilon sweep of a preset")
    sp.add_argument("config", help="preset name or YAML path")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fit", help="fit a power law from a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--column", default="total")
    sp.add_argument("--at-time", type=float, default=float("inf"),
                    help="fit the value nearest this time (default: final)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("plot", help="regenerate figures from a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("scale", help="print dimensionless groups")
    sp.add_argument("preset", help="physical preset name or YAML of SI values")
    sp.add_argument("--convention", default="annex", choices=["annex", "intro"])
    sp.set_defaults(func=cmd_scale)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
