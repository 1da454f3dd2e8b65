"""Process-based Theta engine for throughput runs.

Threads share one GIL, so the threaded engine cannot scale with N.  Here
each worker is a process; ``prop`` lives in shared memory and a worker ships
its pending local sketch as a binary record through a per-worker slot before
publishing ``prop = 0``.  The parent process acts as the propagator.

The lock baseline keeps one KMV sample array in shared memory behind a
process-shared mutex.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import time
from dataclasses import dataclass

import numpy as np

from ..core import Oracle, as_bytes
from ..theta import ThetaSketch

__all__ = ["ProcessRun", "run_engine_processes", "run_lock_processes"]

_SLOT_BYTES = 64


@dataclass
class ProcessRun:
    duration: float
    offered: list[int]
    dropped: list[int]
    estimate: float


def _ctx():
    return mp.get_context("fork")


def _item_stream(w: int, n_workers: int, distinct: int):
    i = w
    while True:
        yield i % distinct
        i += n_workers


def _engine_worker(w, n_workers, distinct, k, seed, buffer, optimised,
                   prop, slot, slot_len, stop, offered, dropped, ready):
    oracle = Oracle(seed)
    halves = [ThetaSketch(k, oracle) for _ in range(2 if optimised else 1)]
    cur, counter, hint = 0, 0, 1.0
    n_off = n_drop = 0
    ready.wait()
    items = _item_stream(w, n_workers, distinct)
    while not stop.value:
        for _ in range(256):
            n_off += 1
            h = oracle.hash(as_bytes(next(items)))
            if h >= hint:
                n_drop += 1
                continue
            counter += 1
            halves[cur].update_hash(h)
            if counter < buffer:
                continue
            while prop[w] == 0:
                if stop.value:
                    break
                os.sched_yield()
            if optimised:
                cur = 1 - cur
            hint = prop[w] or hint
            counter = 0
            pending = halves[1 - cur] if optimised else halves[0]
            rec = pending.to_bytes()
            slot_len[w] = len(rec)
            slot[w * slot_cap(k, buffer): w * slot_cap(k, buffer) + len(rec)] = rec
            pending.clear()
            prop[w] = 0.0
            if not optimised:
                while prop[w] == 0 and not stop.value:
                    os.sched_yield()
                hint = prop[w] or hint
    offered[w] = n_off
    dropped[w] = n_drop


def slot_cap(k: int, buffer: int) -> int:
    return _SLOT_BYTES + 8 * min(k, buffer)


def run_engine_processes(n_workers: int, buffer: int, k: int, seed: int, seconds: float,
                         distinct: int, optimised: bool = True) -> ProcessRun:
    ctx = _ctx()
    cap = slot_cap(k, buffer)
    prop = ctx.RawArray("d", [1.0] * n_workers)
    slot = ctx.RawArray("B", cap * n_workers)
    slot_len = ctx.RawArray("i", n_workers)
    offered = ctx.RawArray("q", n_workers)
    dropped = ctx.RawArray("q", n_workers)
    stop = ctx.RawValue("i", 0)
    ready = ctx.Event()
    procs = [ctx.Process(target=_engine_worker,
                         args=(w, n_workers, distinct, k, seed, buffer, optimised,
                               prop, slot, slot_len, stop, offered, dropped, ready))
             for w in range(n_workers)]
    for p in procs:
        p.start()
    global_sketch = ThetaSketch(k, Oracle(seed))
    ready.set()
    t0 = time.perf_counter()
    deadline = t0 + seconds
    while time.perf_counter() < deadline:
        served = 0
        for w in range(n_workers):
            if prop[w] != 0:
                continue
            rec = bytes(slot[w * cap: w * cap + slot_len[w]])
            global_sketch.merge(ThetaSketch.from_bytes(rec, global_sketch.oracle))
            prop[w] = global_sketch.calc_hint()
            served += 1
        if not served:
            os.sched_yield()
    stop.value = 1
    duration = time.perf_counter() - t0
    for w in range(n_workers):
        if prop[w] == 0:
            prop[w] = global_sketch.calc_hint()
    for p in procs:
        p.join()
    return ProcessRun(duration, list(offered), list(dropped), global_sketch.query())


class _SharedKMV:
    """Sorted k smallest unique hashes in shared memory (caller holds the lock)."""

    def __init__(self, arr, meta, k):
        self.vals = np.frombuffer(arr, dtype=np.float64)
        self.meta = meta  # [count, theta, est]
        self.k = k

    def update_hash(self, h: float) -> bool:
        meta, k = self.meta, self.k
        if h >= meta[1]:
            return False
        cnt = int(meta[0])
        vals = self.vals
        i = int(np.searchsorted(vals[:cnt], h))
        if i < cnt and vals[i] == h:
            return False
        if cnt < k:
            vals[i + 1:cnt + 1] = vals[i:cnt].copy()
            vals[i] = h
            cnt += 1
            meta[0] = cnt
            if cnt == k:
                meta[1] = vals[k - 1]
        else:
            vals[i + 1:k] = vals[i:k - 1].copy()
            vals[i] = h
            meta[1] = vals[k - 1]
        meta[2] = (cnt - 1) / meta[1]
        return True


def _lock_worker(w, n_workers, distinct, k, seed, arr, meta, lock, stop, offered, dropped, ready):
    oracle = Oracle(seed)
    sketch = _SharedKMV(arr, meta, k)
    n_off = n_drop = 0
    ready.wait()
    items = _item_stream(w, n_workers, distinct)
    while not stop.value:
        for _ in range(256):
            item = next(items)
            n_off += 1
            with lock:
                if not sketch.update_hash(oracle.hash(as_bytes(item))):
                    n_drop += 1
    offered[w] = n_off
    dropped[w] = n_drop


def run_lock_processes(n_workers: int, k: int, seed: int, seconds: float,
                       distinct: int) -> ProcessRun:
    ctx = _ctx()
    arr = ctx.RawArray("d", k)
    meta = ctx.RawArray("d", [0.0, 1.0, 0.0])
    lock = ctx.Lock()
    offered = ctx.RawArray("q", n_workers)
    dropped = ctx.RawArray("q", n_workers)
    stop = ctx.RawValue("i", 0)
    ready = ctx.Event()
    procs = [ctx.Process(target=_lock_worker,
                         args=(w, n_workers, distinct, k, seed, arr, meta, lock, stop,
                               offered, dropped, ready))
             for w in range(n_workers)]
    for p in procs:
        p.start()
    ready.set()
    t0 = time.perf_counter()
    time.sleep(seconds)
    stop.value = 1
    duration = time.perf_counter() - t0
    for p in procs:
        p.join()
    return ProcessRun(duration, list(offered), list(dropped), float(meta[2]))
