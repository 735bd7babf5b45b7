"""Command line entry point: solve, simulate, sweep, oracle.

Every artifact embeds the fully resolved configuration and seed in an audit
header (CSV comment line or JSON field) so it can be reproduced from the
file alone. Exit codes: 0 ok, 2 configuration or usage error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import policies as pol
from .model import ModelError, SystemModel, load_model
from .lqr import solve_riccati
from .oracle import OracleSizeError, oracle_path, oracle_restricted
from .simulate import evaluate, run_trajectory, sweep
from .solver import (
    load_table, save_table, solve_path_dp, solve_restricted_dp,
    threshold_extract,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    """Configuration/usage failure mapped to exit code 2."""


def _audit(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    cfg["tool"] = "voictrl"
    return cfg


def _audit_line(args) -> str:
    return "config: " + json.dumps(_audit(args), sort_keys=True, default=str)


def _write_csv(path: Path, header: list[str], rows, audit: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {audit}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _load(args) -> SystemModel:
    try:
        return load_model(args.model)
    except ModelError as exc:
        raise CliError(str(exc)) from exc


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_riccati(schedule, out: Path, audit: str) -> None:
    n = schedule.S.shape[1]
    m = schedule.L.shape[1]
    header = ["k"]
    header += [f"S_{i}{j}" for i in range(n) for j in range(n)]
    header += [f"L_{i}{j}" for i in range(m) for j in range(n)]
    header += [f"Gamma_{i}{j}" for i in range(n) for j in range(n)]
    rows = []
    for k in range(schedule.S.shape[0]):
        row = [k] + [repr(v) for v in schedule.S[k].ravel()]
        row += [repr(v) for v in (schedule.L[k].ravel() if k < schedule.L.shape[0]
                                  else np.full(m * n, np.nan))]
        row += [repr(v) for v in schedule.Gamma[k].ravel()]
        rows.append(row)
    _write_csv(out / "riccati.csv", header, rows, audit)


def _build_policy(spec: str, model, schedule):
    """Parse a policy spec like 'periodic:10' or 'path-voi:table.npz'."""
    kind, _, arg = spec.partition(":")
    if kind == "always":
        return pol.AlwaysOn()
    if kind == "never":
        return pol.Never()
    if kind == "periodic":
        if not arg:
            raise CliError("periodic policy needs a period, e.g. periodic:10")
        return pol.Periodic(int(arg))
    if kind == "aoi-threshold":
        if not arg:
            raise CliError("aoi-threshold policy needs a threshold, e.g. aoi-threshold:5")
        return pol.AoiThreshold(float(arg))
    if kind == "one-sided":
        return pol.OneSidedMismatch(float(arg) if arg else 0.0)
    if kind == "restricted-voi":
        table = load_table(arg) if arg else solve_restricted_dp(model, schedule)
        return pol.RestrictedVoiPolicy(table)
    if kind == "path-voi":
        try:
            table = load_table(arg) if arg else solve_path_dp(model, schedule)
        except ModelError as exc:
            raise CliError(f"path-voi table not solvable: {exc}") from exc
        return pol.PathVoiPolicy(table)
    raise CliError(f"unknown policy spec {spec!r}")


def cmd_solve(args) -> int:
    model = _load(args)
    schedule = solve_riccati(model)
    out = _outdir(args)
    audit = _audit_line(args)
    which = args.policy or "both"
    if which not in ("both", "path-voi", "restricted-voi"):
        raise CliError("solve expects --policy path-voi|restricted-voi|both")
    if args.dump_riccati:
        _dump_riccati(schedule, out, audit)
    if which in ("both", "restricted-voi"):
        table = solve_restricted_dp(model, schedule)
        save_table(table, out / "restricted_table.npz")
        rows = []
        for k in range(model.N + 1):
            for z in range(table.zmax + 1):
                for j, eta in enumerate(list(range(model.N + 2)) + [-1]):
                    v = table.voi[k, z, j]
                    if np.isnan(v):
                        continue
                    rows.append([k, z, eta, repr(float(v)),
                                 int(table.policy[k, z, j])])
        _write_csv(out / "restricted_voi.csv",
                   ["k", "zeta", "eta", "voi", "transmit"], rows, audit)
    if which in ("both", "path-voi"):
        if model.n != 1:
            if which == "path-voi":
                raise CliError("path-voi tables exist for scalar models only")
            print("skipping path table: scalar models only", file=sys.stderr)
        else:
            table = solve_path_dp(model, schedule, e_max=args.e_max,
                                  grid_steps=args.grid_steps,
                                  gh_order=args.gh_order)
            save_table(table, out / "path_table.npz")
            rows = []
            for k in range(model.N + 1):
                for z in range(table.zmax + 1):
                    thr = threshold_extract(table, k, z)
                    rows.append([k, z, "" if thr is None else repr(float(thr))])
            _write_csv(out / "path_thresholds.csv",
                       ["k", "zeta", "threshold"], rows, audit)
    print(f"wrote tables to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args)
    schedule = solve_riccati(model)
    policy = _build_policy(args.policy, model, schedule)
    out = _outdir(args)
    audit = _audit_line(args)
    if args.dump_riccati:
        _dump_riccati(schedule, out, audit)
    report = evaluate(model, schedule, policy, args.runs, args.seed)
    (out / "report.json").write_text(report.to_json(config=_audit(args)))
    if args.runs == 1 or args.plot:
        rec = run_trajectory(model, schedule, policy, args.seed)
        rec.to_csv(out / "trajectory.csv", header_comment=audit)
        eta_out = np.where(np.isinf(rec.eta), -1.0, rec.eta)
        _write_csv(out / "errors.csv",
                   ["k", "controller_error_norm", "trigger_error_norm", "mismatch_norm"],
                   [[k, repr(float(a)), repr(float(b)), repr(float(c))]
                    for k, a, b, c in zip(rec.k, rec.e_norm,
                                          rec.trigger_error_norm, rec.e_tilde_norm)],
                   audit)
        _write_csv(out / "ages.csv", ["k", "zeta", "eta"],
                   [[k, int(z), repr(float(e))]
                    for k, z, e in zip(rec.k, rec.zeta, eta_out)], audit)
        _write_csv(out / "voi_events.csv", ["k", "voi", "voi_over_n", "delta"],
                   [[k, repr(float(v)), repr(float(v / max(model.N, 1))), int(d)]
                    for k, v, d in zip(rec.k, rec.voi, rec.delta)], audit)
        if args.plot:
            from .plots import write_trajectory_figures

            write_trajectory_figures(rec, out)
    print(f"psi = {report.psi:.6g} +/- {report.psi_ci95:.2g}, "
          f"rate = {report.rate:.4f}; artifacts in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    model = _load(args)
    schedule = solve_riccati(model)
    out = _outdir(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise CliError(f"bad --values list: {exc}") from exc
    if not values:
        raise CliError("--values must list at least one parameter")
    try:
        rows = sweep(model, schedule, args.family, values, args.runs, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    header = list(rows[0].keys())
    _write_csv(out / "sweep.csv", header,
               [[row[h] for h in header] for row in rows], _audit_line(args))
    print(f"wrote {len(rows)} sweep points to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = _load(args)
    schedule = solve_riccati(model)
    reports = []
    try:
        if args.variant in ("path", "both"):
            reports.append(oracle_path(model, schedule))
        if args.variant in ("restricted", "both"):
            reports.append(oracle_restricted(model, schedule))
    except OracleSizeError as exc:
        raise CliError(str(exc)) from exc
    payload = []
    for rep in reports:
        print(f"{rep.variant}: dp = {rep.dp_value!r}, enumeration = "
              f"{rep.enum_value!r}, |diff| = {rep.abs_diff:.3e} "
              f"({rep.n_policies} policies, {rep.n_paths} noise/delay paths)")
        payload.append(dict(dataclasses.asdict(rep),
                            abs_diff=rep.abs_diff, rel_diff=rep.rel_diff))
    if args.out:
        out = _outdir(args)
        (out / "oracle.json").write_text(
            json.dumps({"config": _audit(args), "reports": payload}, indent=2,
                       default=str))
    worst = max((rep.rel_diff for rep in reports), default=0.0)
    return EXIT_OK if worst < 1e-9 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voictrl",
        description="Value-of-information event triggering for a networked "
                    "LQG loop with random processing delay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs_default=1):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory")

    p_solve = sub.add_parser("solve", help="solve the triggering value tables")
    common(p_solve)
    p_solve.add_argument("--policy", choices=["path-voi", "restricted-voi", "both"],
                         default="both")
    p_solve.add_argument("--e-max", type=float, default=None,
                         help="mismatch grid half-width (default: auto)")
    p_solve.add_argument("--grid-steps", type=int, default=400)
    p_solve.add_argument("--gh-order", type=int, default=21)
    p_solve.add_argument("--dump-riccati", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="run trajectories / Monte Carlo")
    common(p_sim)
    p_sim.add_argument("--policy", required=True,
                       help="always | never | periodic:P | aoi-threshold:T | "
                            "one-sided:C | restricted-voi[:table.npz] | "
                            "path-voi[:table.npz]")
    p_sim.add_argument("--runs", type=int, default=1)
    p_sim.add_argument("--plot", action="store_true")
    p_sim.add_argument("--dump-riccati", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="rate-regulation trade-off curve")
    common(p_sweep)
    p_sweep.add_argument("--family", required=True,
                         choices=["aoi-threshold", "periodic", "theta"])
    p_sweep.add_argument("--values", required=True, help="comma-separated list")
    p_sweep.add_argument("--runs", type=int, default=1000)
    p_sweep.set_defaults(func=cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="exhaustive-enumeration cross-check")
    p_oracle.add_argument("--model", required=True)
    p_oracle.add_argument("--variant", choices=["path", "restricted", "both"],
                          default="both")
    p_oracle.add_argument("--out", default=None)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
