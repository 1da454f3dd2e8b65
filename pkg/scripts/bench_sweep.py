"""Throughput sweep over worker counts for the engine and the lock baseline.

Threads share the interpreter lock, so scaling runs should use
``--backend processes`` (Theta only) on a multi-core host.
"""

import argparse

from concsketch.engine import EngineConfig
from concsketch.harness.bench import BENCH_COLUMNS, available_cores, bench_run
from concsketch.harness.report import report_emit


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", default="1,2,4", help="comma-separated N values")
    ap.add_argument("--buffer", type=int, default=16)
    ap.add_argument("--k", type=int, default=4096)
    ap.add_argument("--sketch", choices=["theta", "quantiles"], default="theta")
    ap.add_argument("--seconds", type=float, default=2.0)
    ap.add_argument("--backend", choices=["threads", "processes"], default="processes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()

    print(f"{available_cores()} core(s) available")
    rows = []
    for n in (int(x) for x in args.workers.split(",")):
        cfg = EngineConfig(workers=n, buffer=args.buffer, k=args.k, seed=args.seed,
                           sketch=args.sketch)
        for lock in (False, True):
            rep = bench_run(cfg, args.seconds, lock_baseline=lock, backend=args.backend)
            rows.append(rep.row())
            print(f"N={n:<3} {rep.mode:<7} {rep.throughput:>14,.0f} updates/s")
    report_emit(rows, args.out, BENCH_COLUMNS)


if __name__ == "__main__":
    main()
