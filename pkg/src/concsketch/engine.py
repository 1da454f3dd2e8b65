"""Generic concurrent sketch: buffered workers, one propagator, snapshot queries.

``N`` workers each ingest into a private local sketch.  After ``b`` retained
updates a worker hands its local sketch to the propagator through a single
cell ``prop`` (0 means "please merge"; any other value is the hint the
propagator piggybacks back).  The propagator merges flagged local sketches
into the shared global sketch; queries read the global sketch only through
``snapshot``.  With ``optimised=True`` each worker double-buffers so it keeps
ingesting while its previous buffer is merged.

A query misses at most ``N*b`` retained updates (``2*N*b`` when optimised).

Under CPython the GIL makes every attribute load/store below indivisible and
ordered, which provides the publication guarantee the algorithm needs from
``prop`` and from the global sketch's published fields.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Iterator

from .core import ComposableSketch
from .quantiles import quantiles_factory
from .theta import theta_factory

__all__ = [
    "EngineConfig",
    "WorkerContext",
    "ConcurrentSketch",
    "LockedSketch",
    "OwnershipError",
    "engine_start",
    "make_factory",
]

SPIN_BEFORE_YIELD = 16


class OwnershipError(AssertionError):
    """A local sketch half was touched by a thread that does not own it."""


@dataclass
class EngineConfig:
    workers: int = 1
    buffer: int = 16
    k: int = 4096
    seed: int = 0
    sketch: str = "theta"
    optimised: bool = True

    def validate(self) -> None:
        if self.workers < 1:
            raise ValueError(f"need at least one worker, got {self.workers}")
        if self.buffer < 1:
            raise ValueError(f"buffer size b must be >= 1, got {self.buffer}")
        if self.sketch not in ("theta", "quantiles"):
            raise ValueError(f"unknown sketch type {self.sketch!r}")
        if self.sketch == "theta" and self.k < 2:
            raise ValueError("theta sketch needs k >= 2")
        if self.k < 1:
            raise ValueError("k must be positive")

    @property
    def relaxation(self) -> int:
        """Bound on updates a query may miss."""
        r = self.workers * self.buffer
        return 2 * r if self.optimised else r


def make_factory(cfg: EngineConfig) -> Callable[[int | None], ComposableSketch]:
    if cfg.sketch == "theta":
        return theta_factory(cfg.k, cfg.seed)
    return quantiles_factory(cfg.k, cfg.seed)


def _backoff(spins: int) -> int:
    if spins >= SPIN_BEFORE_YIELD:
        time.sleep(0)
    return spins + 1


class WorkerContext:
    """Per-worker state.  Only the owning worker calls :meth:`update`."""

    def __init__(self, worker_id: int, halves: list, buffer: int,
                 optimised: bool, instrument: bool = False):
        self.worker_id = worker_id
        self.local = halves
        self.buffer = buffer
        self.optimised = optimised
        self.cur = 0
        self.counter = 0
        self.hint: Any = 1
        self.prop: Any = 1
        self.offered = 0
        self.dropped = 0
        self.handoffs = 0
        self.instrument = instrument
        self.owner = ["worker"] * len(halves)
        self.hints_seen: list = []

    # ingest; True when the active half just reached b retained updates
    def _ingest(self, item: Any) -> bool:
        self.offered += 1
        half = self.local[self.cur]
        if not half.should_add(self.hint, item):
            self.dropped += 1
            return False
        if self.instrument and self.owner[self.cur] != "worker":
            raise OwnershipError(f"worker {self.worker_id} wrote half {self.cur} "
                                 f"owned by {self.owner[self.cur]}")
        self.counter += 1
        half.update(item)
        return self.counter == self.buffer

    def _signal(self) -> None:
        self.handoffs += 1
        if self.instrument:
            self.owner[self._pending_half()] = "propagator"
        self.prop = 0

    def _pending_half(self) -> int:
        return 1 - self.cur if self.optimised else 0

    def _adopt(self) -> None:
        self.hint = self.prop
        if self.instrument:
            self.hints_seen.append(self.hint)
        self.counter = 0

    def handoff_steps(self) -> Iterator[None]:
        """The handoff after ``b`` retained updates; yields while blocked."""
        if self.optimised:
            while self.prop == 0:
                yield
            self.cur = 1 - self.cur
            self._adopt()
            self._signal()
        else:
            self._signal()
            while self.prop == 0:
                yield
            self._adopt()

    def update_steps(self, item: Any) -> Iterator[None]:
        """Resumable form of :meth:`update` for scripted interleavings."""
        if self._ingest(item):
            yield from self.handoff_steps()

    def update(self, item: Any) -> None:
        if self._ingest(item):
            spins = 0
            for _ in self.handoff_steps():
                spins = _backoff(spins)

    @property
    def retained(self) -> int:
        return self.offered - self.dropped

    def flush_steps(self) -> Iterator[None]:
        """Hand off any partially filled local sketch and wait for its merge.

        Must not overlap with :meth:`update` on this context.
        """
        while self.prop == 0:
            yield
        if self.counter == 0:
            return
        if self.optimised:
            self.cur = 1 - self.cur
            self.counter = 0
            self._signal()
            while self.prop == 0:
                yield
            self.hint = self.prop
        else:
            self._signal()
            while self.prop == 0:
                yield
            self._adopt()


class ConcurrentSketch:
    """Engine state: global sketch, worker contexts, propagator.

    With ``threaded=True`` :meth:`start` launches the propagator thread.
    Otherwise the caller drives :meth:`propagator_step` itself, which is how
    deterministic interleaving scripts run.
    """

    def __init__(self, cfg: EngineConfig,
                 factory: Callable[[int | None], ComposableSketch] | None = None,
                 instrument: bool = False):
        cfg.validate()
        self.cfg = cfg
        factory = factory or make_factory(cfg)
        self.global_sketch = factory(None)
        halves = 2 if cfg.optimised else 1
        self.workers = []
        for wid in range(cfg.workers):
            local = [factory(wid) for _ in range(halves)]
            for s in local:
                if s.k != self.global_sketch.k or type(s) is not type(self.global_sketch):
                    raise ValueError(f"worker {wid} sketch does not match the global sketch")
            self.workers.append(WorkerContext(wid, local, cfg.buffer, cfg.optimised, instrument))
        self.instrument = instrument
        self.merges = 0
        self._running = False
        self._thread: threading.Thread | None = None
        self._snap_cache = threading.local()

    @property
    def relaxation(self) -> int:
        return self.cfg.relaxation

    # -- propagator ------------------------------------------------------------
    def propagator_step(self) -> int:
        """One round-robin scan; returns how many workers were served."""
        served = 0
        g = self.global_sketch
        for ctx in self.workers:
            if ctx.prop != 0:
                continue
            idx = ctx._pending_half()
            if self.instrument and ctx.owner[idx] != "propagator":
                raise OwnershipError(f"propagator merged half {idx} of worker "
                                     f"{ctx.worker_id} owned by {ctx.owner[idx]}")
            half = ctx.local[idx]
            g.merge(half)
            half.clear()
            if self.instrument:
                ctx.owner[idx] = "worker"
            hint = g.calc_hint()
            if hint == 0:
                raise AssertionError("calc_hint returned 0")
            ctx.prop = hint
            served += 1
        self.merges += served
        return served

    def _propagate_forever(self) -> None:
        idle = 0
        while self._running:
            if self.propagator_step():
                idle = 0
            else:
                idle += 1
                time.sleep(0 if idle < 64 else 1e-5)

    def start(self) -> "ConcurrentSketch":
        if self._thread is not None:
            raise RuntimeError("propagator already running")
        self._running = True
        self._thread = threading.Thread(target=self._propagate_forever,
                                        name="propagator", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._running = False
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    @property
    def threaded(self) -> bool:
        return self._thread is not None

    def __enter__(self) -> "ConcurrentSketch":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- client API --------------------------------------------------------------
    def context(self, worker_id: int) -> WorkerContext:
        return self.workers[worker_id]

    def query(self, arg: Any = None) -> Any:
        prev = getattr(self._snap_cache, "copy", None)
        copy = self.global_sketch.snapshot(prev)
        self._snap_cache.copy = copy
        return copy.query(arg)

    def flush_steps(self) -> Iterator[None]:
        for ctx in self.workers:
            yield from ctx.flush_steps()

    def flush(self) -> None:
        """Make every buffered update visible.  No updates may run concurrently."""
        spins = 0
        for _ in self.flush_steps():
            if self.threaded:
                spins = _backoff(spins)
            else:
                self.propagator_step()

    # -- accounting --------------------------------------------------------------
    def offered(self) -> int:
        return sum(w.offered for w in self.workers)

    def dropped(self) -> int:
        return sum(w.dropped for w in self.workers)


def engine_start(cfg: EngineConfig, factory=None, threaded: bool = True,
                 instrument: bool = False) -> ConcurrentSketch:
    engine = ConcurrentSketch(cfg, factory, instrument=instrument)
    if threaded:
        engine.start()
    return engine


class LockedSketch:
    """Baseline: a sequential sketch behind one mutex."""

    def __init__(self, sketch: ComposableSketch):
        self.sketch = sketch
        self._lock = threading.Lock()

    def update(self, item: Any) -> None:
        with self._lock:
            self.sketch.update(item)

    def query(self, arg: Any = None) -> Any:
        with self._lock:
            return self.sketch.query(arg)
