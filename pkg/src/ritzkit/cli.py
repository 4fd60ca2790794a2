"""Command-line experiment runner.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
(non-finite training loss, failed gradient check, violated invariant).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import checks
from .cases import get_case, manufactured_registry
from .config import ConfigError, resolve, write_resolved
from .solve import LadderConfig, OptimizerConfig, TrainingDiverged, gamma_ladder

log = logging.getLogger("ritzkit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

SUMMARY_COLUMNS = ["case", "rung", "width", "lambda", "delta", "steps", "loss", "l2_rel", "h1_rel", "gap", "seconds"]
GRADCHECK_COLUMNS = ["net", "seed", "d", "depth", "width", "p", "n_params", "excluded", "max_rel_error", "worst_param", "passed"]
GRADCHECK_PARAM_COLUMNS = ["net", "seed", "param", "rel_error", "excluded"]
MC_COLUMNS = ["case", "n", "seeds", "mean", "std_error", "mean_std_error", "z", "exact"]
PWL_COLUMNS = ["fixture", "dim", "depth", "declared_depth", "points", "max_abs_dev", "max_scaled_dev", "ok"]
INTERP_COLUMNS = ["dim", "p", "delta", "lp", "w1p", "ratio", "support_violations"]


class UsageError(Exception):
    pass


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else "NA"
    return str(value)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def write_jsonl(path: Path, records) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--seed", type=int, help="global seed (default: config, then $RITZKIT_SEED, then 0)")
    common.add_argument("--jobs", type=int, help="worker threads for independent runs")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ritzkit", description="Deep Ritz experiments with ReLU networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="train a ladder of networks on manufactured cases")
    p.add_argument("--case", help="case name, or several separated by commas")
    p.add_argument("--rungs", type=int)
    p.add_argument("--widths", type=_ints)
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--deltas", type=_floats)
    p.add_argument("--steps", type=int, help="step budget per rung")
    p.add_argument("--record-time", action="store_true", help="write wall times (outputs stop being reproducible)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of parameter gradients")
    p.add_argument("--nets", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--inject-bug", action="store_true", help="flip the gradient sign (negative control)")

    p = sub.add_parser("mc-check", parents=[common], help="Monte-Carlo estimator statistics")
    p.add_argument("--case")
    p.add_argument("--n", type=_ints, help="sample sizes")
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("pwl", parents=[common], help="exact CPWL-to-network fixtures")
    p.add_argument("--hat", action="store_true", help="only the hat fixture")
    p.add_argument("--points", type=int)

    p = sub.add_parser("interp", parents=[common], help="Sobolev errors of Kuhn interpolants of the bump")
    p.add_argument("--bump", action="store_true", help="interpolate the standard bump (the only target)")
    p.add_argument("--deltas", type=_floats)
    p.add_argument("--p", type=_floats)
    p.add_argument("--dim", type=_ints)
    return parser


def _overrides(args) -> dict:
    top = {k: getattr(args, k) for k in ("seed", "jobs", "out") if getattr(args, k) is not None}
    table = {}
    cmd = args.command
    if cmd == "solve":
        if args.case is not None:
            cases = [c for c in args.case.split(",") if c]
            table["case"] = cases[0] if len(cases) == 1 else cases
        for key in ("rungs", "widths", "lambdas", "deltas", "steps"):
            if getattr(args, key) is not None:
                table[key] = getattr(args, key)
        if args.record_time:
            top["record_time"] = True
    elif cmd == "gradcheck":
        if args.nets is not None:
            table["nets"] = args.nets
        if args.tol is not None:
            table["tol"] = args.tol
        if args.inject_bug:
            table["inject_bug"] = True
    elif cmd == "mc-check":
        for key in ("case", "n", "seeds"):
            if getattr(args, key) is not None:
                table[key] = getattr(args, key)
    elif cmd == "pwl":
        if args.hat:
            table["fixtures"] = ["hat"]
        if args.points is not None:
            table["points"] = args.points
    elif cmd == "interp":
        if args.deltas is not None:
            table["deltas"] = args.deltas
        if args.p is not None:
            table["p"] = args.p
        if args.dim is not None:
            table["dim"] = args.dim
    if table:
        top[cmd.replace("-", "_")] = table
    return top


def ladder_from_config(cfg: dict) -> LadderConfig:
    s = cfg["solve"]
    lists = {k: s[k] for k in ("widths", "lambdas", "deltas") if s[k] is not None}
    lengths = {len(v) for v in lists.values()}
    if len(lengths) > 1:
        raise UsageError("widths, lambdas and deltas must have the same length")
    n = lengths.pop() if lengths else (s["rungs"] or 3)
    if s["rungs"] is not None and s["rungs"] != n:
        raise UsageError(f"rungs = {s['rungs']} disagrees with schedule length {n}")
    if n < 1:
        raise UsageError("need at least one rung")
    widths = lists.get("widths", [2 ** (k + 2) for k in range(1, n + 1)])
    lambdas = lists.get("lambdas", [10.0 ** k for k in range(1, n + 1)])
    deltas = lists.get("deltas", [10.0 ** -(k + 1) for k in range(1, n + 1)])
    try:
        return LadderConfig.from_lists(
            widths, lambdas, deltas,
            max_steps=s["steps"], N=s["N"], M=s["M"],
            optimizer=OptimizerConfig(**cfg["optimizer"]),
            seed=cfg["seed"], depth=s["depth"], window=s["window"], eval_N=s["eval_N"], eval_M=s["eval_M"],
            resolution=s["resolution"], kink_width=s["kink_width"], patience=s["patience"],
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_solve(cfg: dict, out: Path) -> int:
    names = cfg["solve"]["case"]
    names = [names] if isinstance(names, str) else list(names)
    known = [c.name for c in manufactured_registry()]
    unknown = [n for n in names if n not in known]
    if unknown:
        raise UsageError(f"unknown case {unknown[0]!r}; available: {', '.join(known)}")
    ladder = ladder_from_config(cfg)

    def run(name):
        try:
            reports, params = gamma_ladder(get_case(name), ladder, record_time=cfg["record_time"])
            return name, reports, params, None
        except TrainingDiverged as exc:
            return name, None, None, exc

    results = checks.pool_map(run, names, cfg["jobs"])
    rows, records, failed = [], [], None
    for name, reports, params, err in results:
        if err is not None:
            log.error("%s: %s", name, err)
            failed = failed or err
            continue
        for r in reports:
            rows.append({
                "case": name, "rung": r.rung, "width": r.width, "lambda": r.lam, "delta": r.delta,
                "steps": r.steps, "loss": r.final_loss, "l2_rel": r.l2_error, "h1_rel": r.h1_error,
                "gap": r.quasi_min_gap, "seconds": r.seconds,
            })
            records.append({"schema_version": 1, "case": name, **r.to_dict()})
        (out / f"params_{name}.json").write_text(params.to_json() + "\n")
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
    write_jsonl(out / "rungs.jsonl", records)
    for row in rows:
        print(f"{row['case']} rung {row['rung']}: loss {row['loss']:.6g} l2_rel {row['l2_rel']:.3e} h1_rel {row['h1_rel']:.3e}")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_gradcheck(cfg: dict, out: Path) -> int:
    g = cfg["gradcheck"]
    results = checks.gradcheck_suite(
        n_nets=g["nets"], seed=cfg["seed"], dims=tuple(g["dims"]), depths=tuple(g["depths"]),
        max_width=g["max_width"], tol=g["tol"], flip_sign=g["inject_bug"], jobs=cfg["jobs"],
    )
    rows, param_rows = [], []
    for i, r in enumerate(results):
        rows.append({
            "net": i, "seed": r.seed, "d": r.d, "depth": r.depth, "width": r.width, "p": r.p,
            "n_params": r.n_params, "excluded": len(r.excluded), "max_rel_error": r.max_rel_error,
            "worst_param": r.worst_index, "passed": r.passed,
        })
        excluded = set(r.excluded)
        for j, e in enumerate(r.rel_errors):
            param_rows.append({"net": i, "seed": r.seed, "param": j, "rel_error": float(e), "excluded": j in excluded})
    write_csv(out / "gradcheck.csv", GRADCHECK_COLUMNS, rows)
    write_csv(out / "gradcheck_params.csv", GRADCHECK_PARAM_COLUMNS, param_rows)
    worst = max(rows, key=lambda r: r["max_rel_error"])
    n_excl = sum(r["excluded"] for r in rows)
    print(f"{len(rows)} nets, {n_excl} mask-flipping parameters excluded")
    print(
        f"worst: net {worst['net']} seed {worst['seed']} (d={worst['d']}, depth={worst['depth']}, "
        f"width={worst['width']}) param {worst['worst_param']} rel error {worst['max_rel_error']:.3e}"
    )
    ok = all(r["passed"] for r in rows)
    print("PASS" if ok else f"FAIL: tolerance {g['tol']:g} exceeded")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_mc_check(cfg: dict, out: Path) -> int:
    m = cfg["mc_check"]
    if m["case"] != "hat_energy":
        raise UsageError(f"unknown mc-check case {m['case']!r}; available: hat_energy")
    rows = checks.mc_hat_sweep(tuple(m["n"]), m["seeds"], cfg["seed"], cfg["jobs"])
    write_csv(out / "mc_check.csv", MC_COLUMNS, rows)
    for r in rows:
        print(f"n={r['n']}: mean {r['mean']:.6f} std error {r['std_error']:.3e} z {r['z']:+.2f}")
    se = [r["std_error"] for r in rows]
    ok = all(b < a for a, b in zip(se, se[1:]))
    if not ok:
        print("FAIL: standard error does not decrease with n")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_pwl(cfg: dict, out: Path) -> int:
    w = cfg["pwl"]
    known = {t[0] for t in checks.pwl_fixtures()}
    bad = [f for f in w["fixtures"] if f not in known]
    if bad:
        raise UsageError(f"unknown fixture {bad[0]!r}; available: {', '.join(sorted(known))}")
    rows = checks.pwl_check(w["fixtures"], w["points"], cfg["seed"])
    write_csv(out / "pwl.csv", PWL_COLUMNS, rows)
    for r in rows:
        print(f"{r['fixture']}: depth {r['depth']} (declared {r['declared_depth']}), max abs deviation {r['max_abs_dev']:.3e}")
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_NUMERIC


def cmd_interp(cfg: dict, out: Path) -> int:
    c = cfg["interp"]
    if any(not d > 0 for d in c["deltas"]):
        raise UsageError("deltas must be positive")
    if any(d not in (1, 2, 3) for d in c["dim"]):
        raise UsageError("dim must be 1, 2 or 3")
    rows = checks.interp_sweep(tuple(c["deltas"]), tuple(float(p) for p in c["p"]), tuple(c["dim"]), cfg["jobs"])
    write_csv(out / "interp.csv", INTERP_COLUMNS, rows)
    ok = True
    for r in rows:
        print(f"d={r['dim']} p={r['p']:g} delta={r['delta']:g}: w1p {r['w1p']:.4e}")
        if r["support_violations"] or (r["ratio"] is not None and not r["ratio"] < 1):
            ok = False
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"solve": cmd_solve, "gradcheck": cmd_gradcheck, "mc-check": cmd_mc_check, "pwl": cmd_pwl, "interp": cmd_interp}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.config, _overrides(args))
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(cfg, out)
        return COMMANDS[args.command](cfg, out)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
