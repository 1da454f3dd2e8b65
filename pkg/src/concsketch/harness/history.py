"""Operation histories: recording, JSON round-trip, validation.

A history is a flat list of invoke/respond events.  Two recorders exist:

* :func:`run_script` drives a non-threaded engine through a deterministic
  interleaving (tokens ``w<i>``, ``p``, ``q``) and stamps events with a logical
  clock.  Same config + same script gives the same history, bit for bit.
* :func:`record_threaded` runs real threads and stamps events with
  ``time.monotonic_ns``; per-thread logs are merged after the run.
"""

from __future__ import annotations

import json
import random
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Iterator, Sequence

from ..engine import ConcurrentSketch, EngineConfig
from ..quantiles import EmptySketchError

__all__ = [
    "Event",
    "Operation",
    "HistoryLog",
    "HistoryError",
    "run_script",
    "random_script",
    "record_history",
    "record_threaded",
    "default_items",
]

INVOKE, RESPOND, MARKER = "invoke", "respond", "marker"
UPDATE, QUERY, FLUSH = "update", "query", "flush"


class HistoryError(ValueError):
    """Malformed history."""


@dataclass
class Event:
    thread: str
    kind: str
    op: str
    payload: Any = None
    ts: int = 0


@dataclass
class Operation:
    """An invoke paired with its response (``resp`` is None while pending)."""

    index: int
    thread: str
    op: str
    arg: Any
    inv: int
    resp: int | None = None
    result: Any = None


@dataclass
class HistoryLog:
    events: list[Event] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, thread: str, kind: str, op: str, payload: Any, ts: int) -> None:
        self.events.append(Event(thread, kind, op, payload, ts))

    def __len__(self) -> int:
        return len(self.events)

    # -- structure ----------------------------------------------------------
    def validate(self) -> None:
        """Per-thread invoke/respond alternation and non-decreasing timestamps."""
        open_ops: dict[str, Event] = {}
        last_ts = None
        for pos, ev in enumerate(self.events):
            if last_ts is not None and ev.ts < last_ts:
                raise HistoryError(f"event {pos}: timestamp {ev.ts} < {last_ts}")
            last_ts = ev.ts
            if ev.kind == MARKER:
                continue
            if ev.kind == INVOKE:
                if ev.thread in open_ops:
                    raise HistoryError(f"event {pos}: {ev.thread} invoked twice without a response")
                open_ops[ev.thread] = ev
            elif ev.kind == RESPOND:
                start = open_ops.pop(ev.thread, None)
                if start is None:
                    raise HistoryError(f"event {pos}: {ev.thread} responded without an invoke")
                if start.op != ev.op:
                    raise HistoryError(f"event {pos}: {ev.op} response to a {start.op} invoke")
            else:
                raise HistoryError(f"event {pos}: unknown kind {ev.kind!r}")

    def operations(self) -> list[Operation]:
        self.validate()
        ops: list[Operation] = []
        pending: dict[str, Operation] = {}
        for ev in self.events:
            if ev.kind == INVOKE:
                op = Operation(len(ops), ev.thread, ev.op, ev.payload, ev.ts)
                ops.append(op)
                pending[ev.thread] = op
            elif ev.kind == RESPOND:
                op = pending.pop(ev.thread)
                op.resp = ev.ts
                op.result = ev.payload
        return ops

    def updates(self) -> list[Operation]:
        return [o for o in self.operations() if o.op == UPDATE]

    def queries(self) -> list[Operation]:
        return [o for o in self.operations() if o.op == QUERY]

    # -- JSON ---------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({"meta": self.meta, "events": [asdict(e) for e in self.events]},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HistoryLog":
        data = json.loads(text)
        log = cls(meta=data.get("meta", {}))
        for e in data["events"]:
            log.events.append(Event(**e))
        return log

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "HistoryLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def default_items(cfg: EngineConfig, per_worker: int, seed: int = 0) -> list[list]:
    """Distinct integer items (Theta) or floats (Quantiles), one list per worker."""
    if cfg.sketch == "quantiles":
        rng = random.Random(seed)
        return [[round(rng.random() * 1000, 3) for _ in range(per_worker)]
                for _ in range(cfg.workers)]
    return [[w + cfg.workers * i for i in range(per_worker)] for w in range(cfg.workers)]


def _answer(engine: ConcurrentSketch, arg: Any) -> Any:
    try:
        return engine.query(arg)
    except EmptySketchError:
        return None


def _meta(cfg: EngineConfig) -> dict:
    return {**asdict(cfg), "relaxation": cfg.relaxation}


def run_script(cfg: EngineConfig, items: Sequence[Sequence[Any]], script: Iterable[str],
               query_arg: Any = None, flush: bool = False,
               instrument: bool = True) -> tuple[HistoryLog, ConcurrentSketch]:
    """Replay an interleaving on a non-threaded engine.

    Tokens: ``w<i>`` advances worker ``i`` by one step (starts its next update,
    or re-checks a blocked handoff), ``p`` runs one propagator scan, ``q`` runs
    one query.  Workers with nothing left to do ignore their tokens.
    """
    if len(items) != cfg.workers:
        raise ValueError(f"need one item list per worker, got {len(items)} for {cfg.workers}")
    engine = ConcurrentSketch(cfg, instrument=instrument)
    log = HistoryLog(meta=_meta(cfg))
    clock = 0

    def emit(thread, kind, op, payload):
        nonlocal clock
        log.append(thread, kind, op, payload, clock)
        clock += 1

    queues = [deque(lst) for lst in items]
    running: list[Iterator[None] | None] = [None] * cfg.workers

    def step_worker(w: int) -> None:
        name = f"w{w}"
        gen = running[w]
        if gen is None:
            if not queues[w]:
                return
            item = queues[w].popleft()
            emit(name, INVOKE, UPDATE, item)
            gen = engine.workers[w].update_steps(item)
        try:
            next(gen)
            running[w] = gen
        except StopIteration:
            running[w] = None
            emit(name, RESPOND, UPDATE, None)

    for tok in script:
        if tok == "p":
            engine.propagator_step()
        elif tok == "q":
            emit("q", INVOKE, QUERY, query_arg)
            emit("q", RESPOND, QUERY, _answer(engine, query_arg))
        elif tok.startswith("w"):
            w = int(tok[1:])
            if not 0 <= w < cfg.workers:
                raise ValueError(f"script names worker {w}, engine has {cfg.workers}")
            step_worker(w)
        else:
            raise ValueError(f"unknown script token {tok!r}")

    if flush:
        # drain: run every remaining update, then hand off partial buffers
        while any(g is not None for g in running) or any(queues):
            engine.propagator_step()
            for w in range(cfg.workers):
                step_worker(w)
        engine.flush()
        emit("main", MARKER, FLUSH, None)
    return log, engine


def random_script(cfg: EngineConfig, per_worker: int, rng: random.Random,
                  query_rate: float = 0.15, prop_rate: float = 0.25) -> list[str]:
    """A random interleaving; blocked workers may leave items unstarted."""
    tokens: list[str] = []
    remaining = [per_worker] * cfg.workers
    budget = 50 * (per_worker + 1) * cfg.workers
    while any(remaining) and len(tokens) < budget:
        x = rng.random()
        if x < query_rate:
            tokens.append("q")
        elif x < query_rate + prop_rate:
            tokens.append("p")
        else:
            w = rng.randrange(cfg.workers)
            tokens.append(f"w{w}")
            if remaining[w]:
                remaining[w] -= 1
    tokens.extend(["p"] + [f"w{w}" for w in range(cfg.workers)] + ["q"])
    return tokens


def record_history(cfg: EngineConfig, script: Sequence[str] | None = None,
                   items: Sequence[Sequence[Any]] | None = None, per_worker: int = 8,
                   query_arg: Any = None, flush: bool = False, seed: int = 0,
                   queries: int = 32) -> HistoryLog:
    """Scripted run if ``script`` is given, else a free-running threaded one."""
    if items is None:
        items = default_items(cfg, per_worker, seed)
    if script is not None:
        log, _ = run_script(cfg, items, script, query_arg=query_arg, flush=flush)
        return log
    return record_threaded(cfg, items, queries=queries, query_arg=query_arg, flush=flush)


def record_threaded(cfg: EngineConfig, items: Sequence[Sequence[Any]], queries: int = 32,
                    query_arg: Any = None, flush: bool = False) -> HistoryLog:
    """Free-running run with real threads and monotonic timestamps."""
    engine = ConcurrentSketch(cfg).start()
    clock = time.monotonic_ns
    logs: list[list[tuple]] = [[] for _ in range(cfg.workers + 1)]
    start = threading.Barrier(cfg.workers + 1)

    def worker(w: int) -> None:
        out, ctx, name = logs[w], engine.workers[w], f"w{w}"
        start.wait()
        for item in items[w]:
            out.append((clock(), name, INVOKE, UPDATE, item))
            ctx.update(item)
            out.append((clock(), name, RESPOND, UPDATE, None))

    def querier() -> None:
        out = logs[-1]
        start.wait()
        for _ in range(queries):
            out.append((clock(), "q", INVOKE, QUERY, query_arg))
            ans = _answer(engine, query_arg)
            out.append((clock(), "q", RESPOND, QUERY, ans))
            time.sleep(0)

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(cfg.workers)]
    threads.append(threading.Thread(target=querier))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    log = HistoryLog(meta=_meta(cfg))
    merged = sorted((rec + (seq,) for lst in logs for seq, rec in enumerate(lst)),
                    key=lambda rec: (rec[0], rec[1], rec[5]))
    for ts, thread, kind, op, payload, _ in merged:
        log.append(thread, kind, op, payload, ts)
    if flush:
        engine.flush()
        log.append("main", MARKER, FLUSH, None, clock())
    engine.stop()
    return log
