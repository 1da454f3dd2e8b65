"""Command line: ``concsketch {bench,errors,history,check}``.

Every subcommand accepts ``--config FILE``, a key=value file (``#`` comments,
keys named like the long flags with ``-`` or ``_``).  Flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import random
import sys
from typing import Sequence

from ..analysis import (
    STATS_COLUMNS,
    QuantilesErrorParams,
    ThetaErrorParams,
    adversary_estimates,
    empirical_stats,
    quantiles_adversary_worst_split,
    quantiles_range,
    quantiles_relaxation_error_bound,
    stats_row,
    strong_estimate_stats,
    sequential_rse_bound,
    weak_exact_stats,
    weak_rse_bound,
)
from ..core import Oracle
from ..engine import EngineConfig
from .bench import BENCH_COLUMNS, bench_run
from .checker import check_relaxation_quantiles, check_relaxation_theta
from .history import HistoryLog, default_items, random_script, record_threaded, run_script
from .report import format_value, report_emit

QUANTILE_COLUMNS = ["phi", "n", "r", "eps", "lo", "hi", "worst_i", "worst_j", "relax_bound"]


def read_config(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    return {key.replace("-", "_"): val for key, val in parser["run"].items()}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _int(text) -> int:
    return int(str(text), 0)


def _floats(text) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sketch", choices=["theta", "quantiles"], default="theta")
    p.add_argument("--threads", type=_int, default=1, help="worker count N")
    p.add_argument("--buffer", type=_int, default=16, help="local buffer size b")
    p.add_argument("--k", type=_int, default=4096)
    p.add_argument("--seed", type=_int, default=0)
    p.add_argument("--optimised", type=_bool, nargs="?", const=True, default=True,
                   help="double buffering (default on; --optimised false to disable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="concsketch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="update-only throughput run")
    b.add_argument("--config")
    _engine_flags(b)
    b.add_argument("--seconds", type=float, default=1.0)
    b.add_argument("--distinct", type=_int, default=1 << 24)
    b.add_argument("--lock-baseline", type=_bool, nargs="?", const=True, default=False)
    b.add_argument("--backend", choices=["threads", "processes"], default="threads")
    b.add_argument("--out", help="CSV path (default: print)")

    e = sub.add_parser("errors", help="error analysis tables")
    e.add_argument("--config")
    e.add_argument("--mode", choices=["weak", "strong", "simulate", "quantiles"], default="weak")
    e.add_argument("--n", type=_int, default=1 << 15)
    e.add_argument("--k", type=_int, default=1 << 10)
    e.add_argument("--r", type=_int, default=8)
    e.add_argument("--phi", type=_floats, default=[0.1, 0.25, 0.5, 0.75, 0.9])
    e.add_argument("--eps", type=float, default=0.01)
    e.add_argument("--trials", type=_int, default=1000)
    e.add_argument("--seed", type=_int, default=0)
    e.add_argument("--out", help="CSV path (default: print)")

    h = sub.add_parser("history", help="record an engine history as JSON")
    h.add_argument("--config")
    _engine_flags(h)
    h.add_argument("--updates", type=_int, default=8, help="updates per worker")
    h.add_argument("--queries", type=_int, default=16, help="queries (threaded runs)")
    h.add_argument("--phi", type=float, default=0.5, help="query argument for quantiles")
    h.add_argument("--scripted", type=_bool, nargs="?", const=True, default=True,
                   help="random deterministic interleaving (default) instead of threads")
    h.add_argument("--out", required=True)

    c = sub.add_parser("check", help="r-relaxation check of a recorded history")
    c.add_argument("--config")
    c.add_argument("--history", required=True)
    c.add_argument("--sketch", choices=["theta", "quantiles"], default=None,
                   help="default: from the history metadata")
    c.add_argument("--r", type=_int, default=None, help="default: 2Nb or Nb from metadata")
    c.add_argument("--k", type=_int, default=None)
    c.add_argument("--seed", type=_int, default=None)
    return ap


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(conf) - set(known))
        if unknown:
            ap.error(f"unknown config keys: {', '.join(unknown)}")
        # re-parse with file values as defaults so explicit flags still win
        sub.set_defaults(**{key: known[key].type(val) if known[key].type else val
                            for key, val in conf.items()})
        args = ap.parse_args(argv)
    return args


def _engine_cfg(args) -> EngineConfig:
    return EngineConfig(workers=args.threads, buffer=args.buffer, k=args.k, seed=args.seed,
                        sketch=args.sketch, optimised=args.optimised)


def _emit(rows, columns, out) -> None:
    if out:
        report_emit(rows, out, columns)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def cmd_bench(args) -> int:
    cfg = _engine_cfg(args)
    rep = bench_run(cfg, args.seconds, args.distinct, lock_baseline=args.lock_baseline,
                    backend=args.backend)
    _emit([rep.row()], BENCH_COLUMNS, args.out)
    return 0


def error_rows(args) -> tuple[list[dict], list[str]]:
    if args.mode == "quantiles":
        rows = []
        for phi in args.phi:
            q = QuantilesErrorParams(phi=phi, n=args.n, r=args.r, eps=args.eps)
            lo, hi = quantiles_range(q)
            i, j = quantiles_adversary_worst_split(phi, args.r)
            rows.append({"phi": phi, "n": args.n, "r": args.r, "eps": args.eps, "lo": lo,
                         "hi": hi, "worst_i": i, "worst_j": j,
                         "relax_bound": quantiles_relaxation_error_bound(args.eps, args.r)})
        return rows, QUANTILE_COLUMNS
    p = ThetaErrorParams(args.n, args.k, args.r)
    bounds = {"sequential": sequential_rse_bound(p.k), "weak": weak_rse_bound(p.k, p.r),
              "strong": None}
    if args.mode == "weak":
        return [stats_row("weak-exact", p, weak_exact_stats(p), bounds["weak"])], STATS_COLUMNS
    if args.mode == "strong":
        return [stats_row("strong-numeric", p, strong_estimate_stats(p))], STATS_COLUMNS
    est = adversary_estimates(p, args.trials, args.seed)
    rows = [stats_row(f"{m}-mc", p, empirical_stats(est[m], p.n), bounds[m])
            for m in ("sequential", "weak", "strong")]
    return rows, STATS_COLUMNS


def cmd_errors(args) -> int:
    rows, cols = error_rows(args)
    _emit(rows, cols, args.out)
    return 0


def cmd_history(args) -> int:
    cfg = _engine_cfg(args)
    items = default_items(cfg, args.updates, args.seed)
    arg = args.phi if cfg.sketch == "quantiles" else None
    if args.scripted:
        script = random_script(cfg, args.updates, random.Random(args.seed))
        log, _ = run_script(cfg, items, script, query_arg=arg, flush=True)
        log.meta["script"] = script
    else:
        log = record_threaded(cfg, items, queries=args.queries, query_arg=arg, flush=True)
    log.save(args.out)
    print(f"wrote {len(log)} events to {args.out}")
    return 0


def cmd_check(args) -> int:
    log = HistoryLog.load(args.history)
    meta = log.meta
    sketch = args.sketch or meta.get("sketch", "theta")
    k = args.k if args.k is not None else meta.get("k")
    seed = args.seed if args.seed is not None else meta.get("seed")
    r = args.r if args.r is not None else meta.get("relaxation")
    if None in (k, seed, r):
        print("history metadata lacks k/seed/r; pass --k --seed --r", file=sys.stderr)
        return 2
    checker = check_relaxation_quantiles if sketch == "quantiles" else check_relaxation_theta
    verdict = checker(log, r, Oracle(seed), k)
    print(verdict)
    return {"pass": 0, "fail": 1}.get(verdict.status, 2)


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    handler = {"bench": cmd_bench, "errors": cmd_errors, "history": cmd_history,
               "check": cmd_check}[args.command]
    return handler(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
