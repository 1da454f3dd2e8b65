"""Update-only throughput benchmark.

Each worker feeds a disjoint slice of ``range(distinct_items)`` (cycling) into
the engine for a fixed wall-clock duration.  ``throughput`` counts every
offered update, including those the hint filters out; ``total_updates``
counts only those retained.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import asdict, dataclass, field

from ..engine import EngineConfig, LockedSketch, engine_start, make_factory
from .parallel import run_engine_processes, run_lock_processes

__all__ = ["BenchReport", "bench_run", "BENCH_COLUMNS", "available_cores"]

BENCH_COLUMNS = ["backend", "mode", "sketch", "workers", "buffer", "k", "optimised",
                 "seconds", "offered", "dropped", "total_updates", "throughput"]


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover
        return os.cpu_count() or 1


@dataclass
class BenchReport:
    config: dict
    backend: str
    mode: str
    duration: float
    offered: int
    dropped: int
    per_thread: list[int] = field(default_factory=list)
    estimate: float | None = None

    @property
    def total_updates(self) -> int:
        return sum(self.per_thread)

    @property
    def throughput(self) -> float:
        return self.offered / self.duration if self.duration > 0 else 0.0

    def row(self) -> dict:
        return {
            "backend": self.backend, "mode": self.mode, "sketch": self.config["sketch"],
            "workers": self.config["workers"], "buffer": self.config["buffer"],
            "k": self.config["k"], "optimised": self.config["optimised"],
            "seconds": round(self.duration, 3), "offered": self.offered,
            "dropped": self.dropped, "total_updates": self.total_updates,
            "throughput": round(self.throughput, 1),
        }


def _item_value(sketch: str, i: int):
    # Quantiles ingests floats; a scrambled order keeps the levels busy
    return float((i * 2654435761) % 1_000_003) if sketch == "quantiles" else i


def _threads_engine(cfg: EngineConfig, seconds: float, distinct: int):
    engine = engine_start(cfg)
    stop = threading.Event()
    barrier = threading.Barrier(cfg.workers + 1)

    def run(w: int) -> None:
        ctx = engine.workers[w]
        i = w
        barrier.wait()
        while not stop.is_set():
            for _ in range(256):
                ctx.update(_item_value(cfg.sketch, i % distinct))
                i += cfg.workers

    threads = [threading.Thread(target=run, args=(w,), daemon=True) for w in range(cfg.workers)]
    for t in threads:
        t.start()
    barrier.wait()
    t0 = time.perf_counter()
    time.sleep(seconds)
    stop.set()
    for t in threads:
        t.join()
    duration = time.perf_counter() - t0
    engine.flush()
    engine.stop()
    offered = [w.offered for w in engine.workers]
    dropped = [w.dropped for w in engine.workers]
    est = engine.query(0.5 if cfg.sketch == "quantiles" else None)
    return duration, offered, dropped, est


def _threads_lock(cfg: EngineConfig, seconds: float, distinct: int):
    locked = LockedSketch(make_factory(cfg)(None))
    stop = threading.Event()
    barrier = threading.Barrier(cfg.workers + 1)
    offered = [0] * cfg.workers

    def run(w: int) -> None:
        i, n = w, 0
        barrier.wait()
        while not stop.is_set():
            for _ in range(256):
                locked.update(_item_value(cfg.sketch, i % distinct))
                i += cfg.workers
                n += 1
        offered[w] = n

    threads = [threading.Thread(target=run, args=(w,), daemon=True) for w in range(cfg.workers)]
    for t in threads:
        t.start()
    barrier.wait()
    t0 = time.perf_counter()
    time.sleep(seconds)
    stop.set()
    for t in threads:
        t.join()
    duration = time.perf_counter() - t0
    # the sequential sketch does not expose drops; count every update as retained
    return duration, offered, [0] * cfg.workers, locked.query(0.5 if cfg.sketch == "quantiles" else None)


def bench_run(cfg: EngineConfig, seconds: float = 1.0, distinct_items: int = 1 << 24,
              lock_baseline: bool = False, backend: str = "threads") -> BenchReport:
    """Drive ``cfg.workers`` workers at full speed for ``seconds``."""
    cfg.validate()
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    if distinct_items < 1:
        raise ValueError("distinct_items must be positive")
    if backend not in ("threads", "processes"):
        raise ValueError(f"unknown backend {backend!r}")
    mode = "lock" if lock_baseline else "engine"
    if backend == "threads":
        fn = _threads_lock if lock_baseline else _threads_engine
        duration, offered, dropped, est = fn(cfg, seconds, distinct_items)
    else:
        if cfg.sketch != "theta":
            raise ValueError("the process backend supports the theta sketch only")
        if lock_baseline:
            run = run_lock_processes(cfg.workers, cfg.k, cfg.seed, seconds, distinct_items)
        else:
            run = run_engine_processes(cfg.workers, cfg.buffer, cfg.k, cfg.seed, seconds,
                                       distinct_items, cfg.optimised)
        duration, offered, dropped, est = run.duration, run.offered, run.dropped, run.estimate
    per_thread = [o - d for o, d in zip(offered, dropped)]
    return BenchReport(asdict(cfg), backend, mode, duration, sum(offered), sum(dropped),
                       per_thread, est)
