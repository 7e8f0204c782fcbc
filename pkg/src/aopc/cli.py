"""Command-line interface: ``aopc generate | solve | oracle | export-lp | bench``.

Exit codes: 0 success (``solve``: proven optimal), 1 usage or input error,
2 time limit reached.  With ``--json`` stdout carries exactly one JSON
document; diagnostics always go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import BACKEND
from .bounding import build_grid, full_grid_bound
from .model import (
    GeneratorConfig,
    InstanceError,
    SizeError,
    brute_force_optimum,
    generate,
    load_instance,
    normalize,
    save_instance,
)
from .search import OPTIMAL, TIME_LIMIT, SolveParams, export_lp, solve

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_TIME_LIMIT = 0, 1, 2

# full-grid comparison cost is about n * K(rho) kernel steps
FULL_GRID_BUDGET = 4e9

GAP_HELP = "gaps are 100 * (ub - lb) / max(ub, 1e-12), in percent"

BENCH_COLUMNS = [
    "n", "phi", "gamma", "kappa", "count", "opt", "gap", "cpu_avg", "cpu_max",
    "gap_dual", "gap_prim", "opt_prim", "#out", "%out", "#int", "%int",
]


class CliError(Exception):
    """Reported on stderr and mapped to exit code 1."""


def _err(msg: str) -> None:
    print(f"aopc: {msg}", file=sys.stderr)


def gap_pct(ub: float, lb: float) -> float:
    return 100.0 * (ub - lb) / max(ub, 1e-12)


def parse_kappa(text: Optional[str], n: int) -> Optional[int]:
    """``None``, a non-negative integer, or ``n/2`` (rounded up for odd n)."""
    if text is None:
        return None
    t = text.strip().lower()
    if t == "n/2":
        return math.ceil(n / 2)
    try:
        k = int(t)
    except ValueError:
        raise CliError(f"invalid --kappa {text!r}: expected an integer or 'n/2'") from None
    if k < 0:
        raise CliError("--kappa must be non-negative")
    return k


def instance_filename(n: int, phi: float, gamma: float, seed: int, index: int) -> str:
    return f"aopc_n{n}_phi{phi:g}_gamma{gamma:g}_seed{seed}_{index:03d}.json"


def _load(path) -> "object":
    try:
        return load_instance(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read instance {path}: {exc}") from None


def _emit(doc: dict, as_json: bool, text: str) -> None:
    if as_json:
        doc = {"schema_version": SCHEMA_VERSION, **doc}
        sys.stdout.write(json.dumps(doc) + "\n")
    else:
        sys.stdout.write(text)


# -- generate ------------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        cfg = GeneratorConfig(args.n, args.phi, args.gamma, args.seed, args.count)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, inst in enumerate(generate(cfg)):
        p = out / instance_filename(cfg.n, cfg.phi, cfg.gamma, cfg.seed, i)
        save_instance(inst, p)
        paths.append(str(p))
    _emit({"files": paths}, args.json, "".join(p + "\n" for p in paths))
    return EXIT_OK


# -- solve ---------------------------------------------------------------------

def _params(args, n: int) -> SolveParams:
    return SolveParams(
        rho_first=args.rho_first,
        rho_last=args.rho_last,
        kappa=parse_kappa(args.kappa, n),
        time_limit=args.time_limit,
        delta=args.delta,
    )


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    params = _params(args, inst.n)
    try:
        res = solve(inst, params)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    doc = {"instance": str(args.instance), "n": inst.n, "kappa": params.kappa,
           "backend": BACKEND, **res.to_dict(), "bounding_time": res.bounding_time}
    text = (
        f"status      {res.status}\n"
        f"profit      {res.best_profit:.10g}\n"
        f"proven_ub   {res.proven_ub:.10g}\n"
        f"assortment  {len(res.assortment)} products\n"
        f"nodes       {res.nodes_explored}\n"
        f"wall_time   {res.wall_time:.3f} s (bounding {res.bounding_time:.3f} s)\n"
    )
    _emit(doc, args.json, text)
    return EXIT_OK if res.status == OPTIMAL else EXIT_TIME_LIMIT


# -- oracle --------------------------------------------------------------------

def cmd_oracle(args) -> int:
    inst = _load(args.instance)
    kappa = parse_kappa(args.kappa, inst.n)
    try:
        res = brute_force_optimum(inst, kappa)
    except SizeError as exc:
        raise CliError(str(exc)) from None
    doc = {"instance": str(args.instance), "n": inst.n, "kappa": kappa,
           "profit": res.best_profit, "assortment": res.assortment}
    _emit(doc, args.json, f"profit      {res.best_profit:.10g}\nassortment  {res.assortment}\n")
    return EXIT_OK


# -- export-lp -----------------------------------------------------------------

def cmd_export_lp(args) -> int:
    inst = _load(args.instance)
    kappa = parse_kappa(args.kappa, inst.n)
    window = None
    if args.window is not None:
        lo, hi = args.window
        if not 0.0 <= lo <= hi <= 1.0:
            raise CliError("--window needs 0 <= LO <= HI <= 1")
        window = (lo, hi)
    try:
        export_lp(inst, args.out, window=window, kappa=kappa)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}") from None
    _emit({"lp": str(args.out)}, args.json, f"{args.out}\n")
    return EXIT_OK


# -- bench ---------------------------------------------------------------------

@dataclass
class BenchRecord:
    n: int
    phi: float
    gamma: float
    kappa: Optional[str]
    count: int = 0
    opt_count: int = 0
    gap: float = 0.0
    cpu_avg: float = 0.0
    cpu_max: float = 0.0
    gap_dual: float = 0.0
    gap_prim: float = 0.0
    opt_prim: int = 0
    out_avg: float = 0.0
    out_pct: float = 0.0
    int_avg: float = 0.0
    int_pct: float = 0.0
    full_cpu_avg: Optional[float] = None
    failures: list = field(default_factory=list)

    def row(self) -> dict:
        return {
            "n": self.n, "phi": self.phi, "gamma": self.gamma,
            "kappa": "" if self.kappa is None else self.kappa, "count": self.count,
            "opt": self.opt_count, "gap": self.gap, "cpu_avg": self.cpu_avg,
            "cpu_max": self.cpu_max, "gap_dual": self.gap_dual, "gap_prim": self.gap_prim,
            "opt_prim": self.opt_prim, "#out": self.out_avg, "%out": self.out_pct,
            "#int": self.int_avg, "%int": self.int_pct,
        }


def _bench_one(task) -> dict:
    """Solve one instance file; never raises, failures are recorded."""
    path, opts = task
    out = {"name": Path(path).name}
    try:
        inst = load_instance(path)
        kappa = parse_kappa(opts["kappa"], inst.n)
        params = SolveParams(rho_first=opts["rho_first"], rho_last=opts["rho_last"],
                             kappa=kappa, time_limit=opts["time_limit"], delta=opts["delta"])
        res = solve(inst, params)
        b = res.bounding_stats
        z = res.best_profit
        # kappa = 0 is solved without bounding
        b_ub, b_lb = (b.ub, b.lb) if b is not None else (z, z)
        meta = inst.meta
        K = build_grid(normalize(inst), opts["rho_last"]).K
        out.update(
            n=inst.n, phi=meta.get("phi"), gamma=meta.get("gamma"),
            status=res.status, wall=res.wall_time, gap=gap_pct(res.proven_ub, z),
            gap_dual=gap_pct(b_ub, z), gap_prim=gap_pct(z, b_lb),
            opt_prim=bool(res.status == OPTIMAL and z - b_lb <= 1e-9 * max(1.0, abs(z))),
            fixed=len(res.fixing_stats.fixed_out) if res.fixing_stats else 0,
            evaluated=b.intervals_evaluated if b is not None else 0, K=K,
        )
        if opts["compare_full_grid"]:
            if inst.n * K > FULL_GRID_BUDGET:
                out["full_skipped"] = True
            else:
                t0 = time.perf_counter()
                full_grid_bound(normalize(inst), build_grid(normalize(inst), opts["rho_last"]),
                                kappa=kappa, delta=opts["delta"])
                out["full_wall"] = time.perf_counter() - t0
    except Exception as exc:  # recorded, the harness keeps going
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def aggregate(results: list, kappa: Optional[str]) -> list:
    """Group per-instance results by (n, phi, gamma) into BenchRecords."""
    groups: dict = {}
    for r in results:
        key = (r.get("n"), r.get("phi"), r.get("gamma"))
        groups.setdefault(key, []).append(r)
    records = []
    for key in sorted(groups, key=lambda k: tuple(-1 if x is None else x for x in k)):
        rs = groups[key]
        ok = [r for r in rs if "error" not in r]
        rec = BenchRecord(n=key[0], phi=key[1], gamma=key[2], kappa=kappa, count=len(rs))
        rec.failures = [f"{r['name']}: {r['error']}" for r in rs if "error" in r]
        if ok:
            walls = [r["wall"] for r in ok]
            rec.opt_count = sum(r["status"] == OPTIMAL for r in ok)
            rec.gap = float(np.mean([r["gap"] for r in ok]))
            rec.cpu_avg, rec.cpu_max = float(np.mean(walls)), float(np.max(walls))
            rec.gap_dual = float(np.mean([r["gap_dual"] for r in ok]))
            rec.gap_prim = float(np.mean([r["gap_prim"] for r in ok]))
            rec.opt_prim = sum(r["opt_prim"] for r in ok)
            rec.out_avg = float(np.mean([r["fixed"] for r in ok]))
            rec.out_pct = float(np.mean([100.0 * r["fixed"] / r["n"] for r in ok]))
            rec.int_avg = float(np.mean([r["evaluated"] for r in ok]))
            rec.int_pct = float(np.mean([100.0 * r["evaluated"] / r["K"] for r in ok]))
            full = [r["full_wall"] for r in ok if "full_wall" in r]
            rec.full_cpu_avg = float(np.mean(full)) if full else None
        records.append(rec)
    return records


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.4f}" if abs(x) < 1e6 else f"{x:.4g}"
    return str(x)


def render_csv(records: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS + ["cpu_full_grid"], lineterminator="\n")
    w.writeheader()
    for rec in records:
        row = rec.row()
        row["cpu_full_grid"] = "" if rec.full_cpu_avg is None else rec.full_cpu_avg
        w.writerow(row)
    return buf.getvalue()


def render_markdown(records: list) -> str:
    cols = ["(n, phi, gamma)"] + BENCH_COLUMNS[4:]
    if any(r.full_cpu_avg is not None for r in records):
        cols.append("cpu_full_grid")
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for rec in records:
        row = rec.row()
        cells = [f"({rec.n}, {rec.phi}, {rec.gamma})"] + [_fmt(row[c]) for c in BENCH_COLUMNS[4:]]
        if "cpu_full_grid" in cols:
            cells.append("" if rec.full_cpu_avg is None else _fmt(rec.full_cpu_avg))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _bench_files(args) -> list:
    if args.instances is not None:
        d = Path(args.instances)
        if not d.is_dir():
            raise CliError(f"not a directory: {d}")
        return sorted(str(p) for p in d.glob("*.json"))
    if args.out_instances is None:
        raise CliError("grid mode needs --out-instances DIR to hold generated files")
    files = []
    out = Path(args.out_instances)
    out.mkdir(parents=True, exist_ok=True)
    for n in args.n:
        for phi in args.phi:
            for gamma in args.gamma:
                cfg = GeneratorConfig(n, phi, gamma, args.seed, args.count)
                for i, inst in enumerate(generate(cfg)):
                    p = out / instance_filename(n, phi, gamma, args.seed, i)
                    save_instance(inst, p)
                    files.append(str(p))
    return sorted(files)


def cmd_bench(args) -> int:
    files = _bench_files(args)
    opts = {
        "kappa": args.kappa, "rho_first": args.rho_first, "rho_last": args.rho_last,
        "time_limit": args.time_limit, "delta": args.delta,
        "compare_full_grid": args.compare_full_grid,
    }
    tasks = [(f, opts) for f in files]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, tasks))
    else:
        results = [_bench_one(t) for t in tasks]
    results.sort(key=lambda r: r["name"])
    for r in results:
        if "error" in r:
            _err(f"{r['name']}: {r['error']}")
        if r.get("full_skipped"):
            _err(f"{r['name']}: full-grid comparison skipped (n * K above budget)")
    records = aggregate(results, args.kappa)
    csv_text = render_csv(records)
    md_text = render_markdown(records)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.markdown:
        Path(args.markdown).write_text(md_text)
    doc = {
        "records": [dict(r.row(), cpu_full_grid=r.full_cpu_avg, failures=r.failures)
                    for r in records],
        "instances": results,
        "gap_definition": GAP_HELP,
    }
    _emit(doc, args.json, md_text)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _solver_flags(p) -> None:
    p.add_argument("--rho-first", type=float, default=1e-2, help="first grid density (1e-2)")
    p.add_argument("--rho-last", type=float, default=1e-7, help="final grid density (1e-7)")
    p.add_argument("--kappa", default=None,
                   help="cardinality limit: an integer or 'n/2' (rounded up for odd n)")
    p.add_argument("--delta", type=float, default=1e-5, help="Lagrangian multiplier step (1e-5)")
    p.add_argument("--time-limit", type=float, default=600.0, help="seconds per solve (600)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aopc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances as JSON files")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--phi", type=float, default=0.25)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--out", default=".", help="output directory")
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance to proven optimality")
    s.add_argument("--instance", required=True)
    _solver_flags(s)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exhaustive optimum (n <= 25)")
    o.add_argument("--instance", required=True)
    o.add_argument("--kappa", default=None)
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("export-lp", help="write the linear MIP in LP format")
    e.add_argument("--instance", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                   help="bounds on the no-purchase probability")
    e.add_argument("--kappa", default=None)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_export_lp)

    b = sub.add_parser("bench", help="benchmark tables over a directory or config grid",
                       epilog=GAP_HELP)
    src = b.add_mutually_exclusive_group(required=True)
    src.add_argument("--instances", help="directory of instance JSON files")
    src.add_argument("--grid", action="store_true", help="generate a (n, phi, gamma) grid")
    b.add_argument("--n", type=int, nargs="+", default=[100, 200, 500, 1000])
    b.add_argument("--phi", type=float, nargs="+", default=[0.25, 0.75])
    b.add_argument("--gamma", type=float, nargs="+", default=[0.5, 1.0])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--out-instances", default=None, help="where grid mode writes instances")
    _solver_flags(b)
    b.add_argument("--compare-full-grid", action="store_true",
                   help="also time the single-stage grid at rho-last (size guarded)")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--csv", default=None, help="write the CSV table here")
    b.add_argument("--markdown", default=None, help="write the Markdown table here")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, InstanceError) as exc:
        _err(str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
