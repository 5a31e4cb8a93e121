"""Command-line front end.

Exit codes: 0 success, 2 input validation error, 3 numeric
non-convergence.  Errors go to stderr as a one-line JSON object; with
``--json`` stdout carries nothing but the result document.  Every
random command takes ``--seed`` (default: the PCMETA_SEED environment
variable, else 0), and a fixed seed yields byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io as pio
from .combiners import CombinerSpec, fisher_exact_2x2
from .counterexample import TEST_NAMES, power_grid_2d
from .errors import (
    InputValidationError,
    NonConvergenceError,
    NumericDomainError,
    PcmetaError,
)
from .numerics import ProbValue
from .oracle import NullConfig, mc_validity, tpm_mc_cdf
from .partial_conjunction import (
    bhpc,
    fixed_subset_combiner,
    gbhpc_enumerate,
    pc_curve,
)
from .simulation import METHOD_NAMES, SimConfig, run_power_map

CLI_METHODS = ("fisher", "simes", "bonferroni", "tpm", "stouffer")


def _default_seed() -> int:
    raw = os.environ.get("PCMETA_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise InputValidationError(f"PCMETA_SEED is not an integer: {raw!r}")


def _build_spec(method: str, gamma: float | None, weights=None) -> CombinerSpec:
    if method not in CLI_METHODS:
        raise InputValidationError(f"unknown method {method!r}; pick from {CLI_METHODS}")
    if method == "tpm":
        if gamma is None:
            raise InputValidationError("--method tpm requires --gamma")
        return CombinerSpec("tpm", tpm_gamma=gamma)
    if method == "stouffer":
        if weights is None:
            raise InputValidationError("stouffer requires weights")
        return CombinerSpec("stouffer_weighted", weights=tuple(weights))
    return CombinerSpec(method)


def _load_input(path: str):
    records = pio.read_study_csv(path)
    return records, pio.records_to_pvalues(records)


def _weights_for(args, records) -> tuple[float, ...]:
    if getattr(args, "weights_from", None) == "n_sample":
        return pio.stouffer_weights_from_records(records)
    return tuple(1.0 for _ in records)


def cmd_combine(args) -> int:
    records, ps = _load_input(args.input)
    weights = _weights_for(args, records) if args.method == "stouffer" else None
    spec = _build_spec(args.method, args.gamma, weights)
    from .combiners import combine

    result = combine(spec, ps)
    if args.json:
        print(pio.json_dumps({
            "method": args.method,
            "n": len(ps),
            "p": result.linear,
            "log_p": result.log_value,
        }))
    else:
        print(f"combined p ({args.method}, n={len(ps)}): {pio.format_prob(result)}")
    return 0


def cmd_pc(args) -> int:
    records, ps = _load_input(args.input)
    n = len(ps)
    kwargs = {}
    if args.groups:
        kwargs["groups"] = pio.partition_from_records(records)
    elif args.method == "stouffer":
        weights = _weights_for(args, records)

        def factory(u):
            spec = CombinerSpec(
                "stouffer_weighted", weights=tuple(weights[i] for i in u)
            )
            from .combiners import combine

            return lambda p_u: combine(spec, p_u)

        kwargs["g"] = factory
    elif args.enumerate:
        kwargs["g"] = fixed_subset_combiner(_build_spec(args.method, args.gamma))
    else:
        kwargs["spec"] = _build_spec(args.method, args.gamma)

    curve = pc_curve(ps, args.alpha, **kwargs)
    if args.r is not None:
        if not (1 <= args.r <= n):
            raise InputValidationError(f"--r must be in 1..{n}, got {args.r}")
        entry = curve.entries[args.r - 1]
        if args.json:
            print(pio.json_dumps({
                "method": curve.method,
                "n": n,
                "r": entry.r,
                "p": entry.p.linear,
                "log_p": entry.p.log_value,
                "alpha": curve.alpha,
                "rejected": entry.r in curve.confidence_set,
            }))
        else:
            print(f"p_{{{entry.r}/{n}}} [{curve.method}]: {pio.format_prob(entry.p)}")
        return 0
    if args.json:
        print(pio.json_dumps(pio.curve_to_json_dict(curve)))
        return 0
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(pio.curve_to_csv(curve))
        print(f"wrote {args.csv}")
        return 0
    print(f"method: {curve.method}   alpha: {curve.alpha}")
    for e in curve.entries:
        mark = "*" if e.r in curve.confidence_set else " "
        print(f"  r={e.r:>3} {mark} p = {pio.format_prob(e.p)}")
    for w in pio.curve_warnings(curve):
        print(f"  warning: {w}")
    rhat, prop = curve.r_hat, curve.r_hat / n
    print(
        f"confidence set {{r : p <= alpha}} = {sorted(curve.confidence_set)}; "
        f"at confidence {1 - curve.alpha:g}, at least {rhat} of {n} studies are "
        f"non-null (proportion {prop:.3f})"
    )
    return 0


def cmd_exact2x2(args) -> int:
    records = pio.read_study_csv(args.input)
    rows = []
    for rec in records:
        if not rec.has_counts:
            raise InputValidationError(f"{rec.study_id}: no counts on this row")
        res = fisher_exact_2x2(rec.count_table(), convention=args.convention)
        rows.append((rec.study_id, res.odds_ratio, res.p_value))
    if args.json:
        print(pio.json_dumps({
            "convention": args.convention,
            "rows": [
                {"study_id": sid, "odds_ratio": orr, "p": p.linear, "log_p": p.log_value}
                for sid, orr, p in rows
            ],
        }))
    else:
        for sid, orr, p in rows:
            print(f"{sid}: OR = {orr:.4g}, two-sided p = {pio.format_prob(p)}")
    return 0


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputValidationError(f"cannot read {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        raise InputValidationError(f"{args.config} is not valid JSON: {exc}")
    mu0_values = raw.get("mu0_values", [round(0.02 + 0.042 * i, 4) for i in range(10)])
    sigma0_values = raw.get(
        "sigma0_values", [round(0.01 + 0.043 * i, 4) for i in range(10)]
    )
    r0_list = raw.get("r0", [2, 4, 6])
    if isinstance(r0_list, int):
        r0_list = [r0_list]
    seed = raw.get("seed", args.seed)
    base = dict(
        mu0=1.0,
        sigma0=1.0,
        reps=int(raw.get("reps", 20000)),
        seed=int(seed),
        n=int(raw.get("n", 8)),
        r=int(raw.get("r", 2)),
        alpha=float(raw.get("alpha", 0.05)),
        methods=tuple(raw.get("methods", METHOD_NAMES)),
    )
    if "sample_sizes" in raw:
        base["sample_sizes"] = tuple(int(x) for x in raw["sample_sizes"])
    all_cells = []
    for r0 in r0_list:
        cfg = SimConfig(r0=int(r0), **base)
        grid = run_power_map(cfg, mu0_values, sigma0_values)
        all_cells.extend(grid.cells)
    from .simulation import PowerGrid

    merged = PowerGrid(
        mu0_values=tuple(float(v) for v in mu0_values),
        sigma0_values=tuple(float(v) for v in sigma0_values),
        cells=tuple(all_cells),
    )
    text = pio.power_grid_to_csv(merged)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {args.out} ({len(merged.cells)} rows)")
    return 0


def cmd_counterexample(args) -> int:
    mu_grid = list(np.linspace(0.0, args.mu_max, args.grid))
    grids = [
        power_grid_2d(test, mu_grid, args.alpha, args.reps, args.seed)
        for test in TEST_NAMES
    ]
    text = pio.counterexample_grid_to_csv(grids)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"wrote {args.out} ({args.grid}x{args.grid} grid, {len(TEST_NAMES)} tests)")
    return 0


def cmd_dataset(args) -> int:
    text = pio.export_bundled_csv(args.view)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _parse_float_list(raw: str, flag: str) -> list[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip() != ""]
    except ValueError:
        raise InputValidationError(f"{flag} expects a comma-separated float list")


def cmd_oracle_validity(args) -> int:
    z_means = _parse_float_list(args.z_means, "--z-means") if args.z_means else None
    k = args.k if z_means is None else len(z_means)
    if k is None:
        raise InputValidationError("pass --k or --z-means")
    config = NullConfig(n_studies=k, z_means=tuple(z_means) if z_means else None)
    if args.method == "stouffer":
        spec = CombinerSpec("stouffer_weighted", weights=(1.0,) * k)
    else:
        spec = _build_spec(args.method, args.gamma)
    from .combiners import combine

    if args.pc_r is None:
        rule = lambda ps: combine(spec, ps)
        label = args.method
    else:
        if args.method == "stouffer":
            raise InputValidationError("--pc-r requires a symmetric --method")
        rule = lambda ps: bhpc(ps, args.pc_r, spec)
        label = f"bhpc:{args.method}@r={args.pc_r}"
    alphas = _parse_float_list(args.alphas, "--alphas")
    estimates = mc_validity(rule, config, alphas, args.reps, args.seed)
    if args.json:
        print(pio.json_dumps({
            "rule": label,
            "n_studies": k,
            "z_means": z_means,
            "reps": args.reps,
            "seed": args.seed,
            "estimates": [
                {"alpha": e.alpha, "rate": e.rate, "se": e.se,
                 "bound": e.bound, "valid": e.valid}
                for e in estimates
            ],
        }))
    else:
        for e in estimates:
            status = "ok" if e.valid else "INVALID"
            print(
                f"{label}: alpha={e.alpha:g} rate={e.rate:.5f} (se {e.se:.5f}, "
                f"bound {e.bound:.5f}) {status}"
            )
    return 0


def cmd_oracle_tpm(args) -> int:
    rate, se = tpm_mc_cdf(args.l, args.gamma, args.w, args.reps, args.seed)
    if args.json:
        print(pio.json_dumps({
            "L": args.l, "gamma": args.gamma, "w": args.w,
            "reps": args.reps, "seed": args.seed,
            "estimate": rate, "se": se,
        }))
    else:
        print(f"P(W <= {args.w:g}) = {rate:.6f} +/- {se:.6f} (L={args.l}, gamma={args.gamma:g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcmeta",
        description="Partial-conjunction p-values and replicability analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (default: PCMETA_SEED env var, else 0)")

    p = sub.add_parser("combine", help="combine per-study p-values into one")
    p.add_argument("input", help="study CSV (p rows or count rows)")
    p.add_argument("--method", default="fisher", choices=CLI_METHODS)
    p.add_argument("--gamma", type=float, default=None, help="TPM truncation point")
    p.add_argument("--weights-from", choices=["n_sample"], default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("pc", help="partial-conjunction p-values and confidence set")
    p.add_argument("input")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--r", type=int, default=None, help="single r to test")
    group.add_argument("--all-r", action="store_true", help="full curve (default)")
    p.add_argument("--method", default="fisher", choices=CLI_METHODS)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--groups", action="store_true",
                   help="grouped rule over the group_factor blocks")
    p.add_argument("--enumerate", action="store_true",
                   help="force exact subset enumeration")
    p.add_argument("--weights-from", choices=["n_sample"], default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json", action="store_true")
    p.add_argument("--csv", default=None, help="write the curve to this CSV file")
    p.set_defaults(func=cmd_pc)

    p = sub.add_parser("exact2x2", help="per-row 2x2 exact tests")
    p.add_argument("input", help="study CSV with count rows")
    p.add_argument("--convention", default="min_likelihood",
                   choices=["min_likelihood", "doubling"])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_exact2x2)

    p = sub.add_parser("simulate", help="power maps for the 8-study design")
    p.add_argument("config", help="JSON config file")
    p.add_argument("--out", required=True, help="output CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("counterexample",
                       help="power grids for the non-monotone 2-study tests")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--grid", type=int, default=21, help="points per axis")
    p.add_argument("--mu-max", type=float, default=5.0)
    p.add_argument("--reps", type=int, default=20000)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("dataset", help="export the bundled subgroup dataset")
    p.add_argument("--view", default="pvalues", choices=["pvalues", "counts", "full"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("oracle", help="Monte Carlo verification backends")
    osub = p.add_subparsers(dest="oracle_command", required=True)

    q = osub.add_parser("validity", help="null rejection rate of a rule")
    q.add_argument("--method", default="fisher", choices=CLI_METHODS)
    q.add_argument("--gamma", type=float, default=None)
    q.add_argument("--k", type=int, default=None, help="number of studies")
    q.add_argument("--pc-r", type=int, default=None,
                   help="wrap the combiner in a drop-smallest PC rule at this r")
    q.add_argument("--z-means", default=None,
                   help="comma list of per-study z means (0 = null study)")
    q.add_argument("--alphas", default="0.01,0.05")
    q.add_argument("--reps", type=int, default=100000)
    q.add_argument("--json", action="store_true")
    add_seed(q)
    q.set_defaults(func=cmd_oracle_validity)

    q = osub.add_parser("tpm-cdf", help="empirical truncated-product null CDF")
    q.add_argument("--l", type=int, required=True, help="number of uniforms")
    q.add_argument("--gamma", type=float, required=True)
    q.add_argument("--w", type=float, required=True)
    q.add_argument("--reps", type=int, default=1000000)
    q.add_argument("--json", action="store_true")
    add_seed(q)
    q.set_defaults(func=cmd_oracle_tpm)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except (InputValidationError, NumericDomainError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 3
    except PcmetaError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
