"""Command-line entry point: ``sg-lab <subcommand> --config cfg.json --out DIR``.

Exit codes: 0 ok, 1 numeric failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, SGLabError
from .excitation import DesignAudit, ExcitationSpec, adversarial_regressors, design_regressors, measure_kappa_profile
from .experiment import compare_regimes, load_config, run_experiment, simulate_armax
from .schedule import factorial_schedule, stirling_rows, write_schedule_csv

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("sg_lab")


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.stride is not None:
        if args.stride < 1:
            raise ConfigError("stride must be >= 1", "--stride")
        cfg.stride = args.stride
    return cfg


def _design(cfg, out: Path):
    ex = cfg.excitation
    spec = ExcitationSpec(dim=ex.dim, alpha=ex.alpha, horizon=cfg.horizon, step_energy=ex.step_energy,
                          beta=ex.beta, mode=ex.mode)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[0])
    audit = DesignAudit()
    phis = (adversarial_regressors if spec.alpha > 1 else design_regressors)(spec, rng, audit)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "regressors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"phi{i}" for i in range(phis.shape[1])])
        for n, row in enumerate(phis):
            w.writerow([n] + [repr(float(v)) for v in row])
    profile = measure_kappa_profile(phis[1:], stride=cfg.stride, alpha=spec.alpha)
    profile.to_csv(out / "kappa.csv")
    late = profile.n >= cfg.horizon // 10
    print(f"design: N={cfg.horizon} m={spec.dim} alpha={spec.alpha:g} "
          f"fallback_steps={len(audit.fallback_steps)} "
          f"kappa/(log r)^alpha in [{profile.ratio[late].min():.4g}, {profile.ratio[late].max():.4g}] for n >= N/10")
    return phis


def _schedule(cfg, out: Path):
    if cfg.mode == "armax":
        rs = simulate_armax(cfg).rs
    else:
        phis = _design(cfg, out)
        rs = 1.0 + np.concatenate([[0.0], np.cumsum(np.sum(phis[1:] ** 2, axis=1))])
    sched = factorial_schedule(rs)
    out.mkdir(parents=True, exist_ok=True)
    write_schedule_csv(out / "schedule.csv", sched, rs)
    with open(out / "stirling.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "log_r_before_t_k", "log_l_k_factorial", "log_l_plus_k_log_k"])
        for row in stirling_rows(sched, rs):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    failed = [c.k for c in sched.ratio_certs if not c.passed]
    print(f"schedule: K_max={sched.k_max} l={sched.l_const:.6g} ratio failures={failed}")
    return EXIT_OK


def _print_summary(s):
    for k, v in dataclasses.asdict(s).items():
        print(f"{k:>26}: {v}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sg-lab", description="SG identification experiments and Phi(n, k) bounds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "run the full estimation and bound pipeline"),
        ("design", "generate designed regressors and their kappa profile"),
        ("verify-bounds", "run the pipeline; exit 1 if any bound or ledger line fails"),
        ("schedule", "build the factorial block schedule and its certificates"),
        ("compare", "run configs that differ only in alpha and tabulate them"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, action="append" if name == "compare" else "store",
                        help="JSON config" + (" (repeat for each alpha)" if name == "compare" else ""))
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--stride", type=int, default=None, help="sampling cadence for profiles")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.command == "compare":
            cfgs = [_apply_overrides(load_config(c), args) for c in args.config]
            table = compare_regimes(cfgs, out)
            cols = list(table[0])
            print(" ".join(f"{c:>24}" for c in cols))
            for row in table:
                print(" ".join(f"{row[c]:>24.6g}" if isinstance(row[c], float) else f"{row[c]!s:>24}" for c in cols))
            return EXIT_OK
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "design":
            if cfg.mode != "direct-regressor":
                raise ConfigError("design needs mode direct-regressor", "mode")
            _design(cfg, out)
            return EXIT_OK
        if args.command == "schedule":
            return _schedule(cfg, out)
        summary = run_experiment(cfg, out)
        _print_summary(summary)
        if args.command == "verify-bounds" and (summary.ledger_fail or summary.block_bound_violations):
            print(f"verify-bounds: {summary.ledger_fail} ledger failures, "
                  f"{summary.block_bound_violations} block bound violations", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SGLabError, ArithmeticError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
