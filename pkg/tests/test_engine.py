import random
import threading

import pytest

from concsketch.core import Oracle, as_bytes
from concsketch.engine import (
    ConcurrentSketch,
    EngineConfig,
    LockedSketch,
    OwnershipError,
    engine_start,
)
from concsketch.quantiles import EmptySketchError, QuantilesSketch
from concsketch.theta import ThetaSketch, theta_factory


def drive(engine, worker, items):
    """Feed items through one worker, running the propagator whenever it blocks."""
    ctx = engine.workers[worker]
    for item in items:
        for _ in ctx.update_steps(item):
            engine.propagator_step()


def test_relaxation_bound():
    assert EngineConfig(workers=4, buffer=16, optimised=True).relaxation == 128
    assert EngineConfig(workers=4, buffer=16, optimised=False).relaxation == 64
    assert EngineConfig(workers=1, buffer=1).relaxation == 2


@pytest.mark.parametrize("kw", [dict(workers=0), dict(buffer=0), dict(sketch="hll"),
                                dict(k=1)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        ConcurrentSketch(EngineConfig(**kw))


def test_factory_mismatch_rejected():
    good = theta_factory(8, 0)

    def bad(worker_id=None):
        return good(worker_id) if worker_id is None else ThetaSketch(16, Oracle(0))

    with pytest.raises(ValueError):
        ConcurrentSketch(EngineConfig(workers=2, k=8), bad)


def test_minimal_engine_starts_and_stops():
    e = engine_start(EngineConfig(workers=1, buffer=1, k=4))
    e.workers[0].update(1)
    e.flush()
    e.stop()
    assert e.query() == 0.0  # one sample: (1-1)/1


def test_query_before_propagation():
    e = ConcurrentSketch(EngineConfig(workers=2, buffer=4, k=8))
    e.workers[0].update(1)
    assert e.query() == 0


def test_dropped_item_leaves_state():
    e = ConcurrentSketch(EngineConfig(workers=1, buffer=4, k=8, seed=1))
    ctx = e.workers[0]
    ctx.hint = 0.5
    item = next(i for i in range(100) if Oracle(1).hash(as_bytes(i)) >= 0.5)
    ctx.update(item)
    assert (ctx.counter, ctx.dropped, ctx.offered) == (0, 1, 1)
    assert len(ctx.local[0]) == 0


@pytest.mark.parametrize("optimised", [False, True])
def test_b2_two_updates_one_handoff(optimised):
    e = ConcurrentSketch(EngineConfig(workers=1, buffer=2, k=8, optimised=optimised))
    ctx = e.workers[0]
    list(ctx.update_steps(1))
    assert ctx.handoffs == 0
    steps = ctx.update_steps(2)
    for _ in steps:
        e.propagator_step()
    assert ctx.handoffs == 1
    if optimised:
        assert ctx.prop == 0 and ctx.cur == 1  # handed off, not yet merged
    else:
        assert ctx.prop != 0 and len(e.global_sketch) == 2


def test_propagator_step_noop_and_single_worker():
    e = ConcurrentSketch(EngineConfig(workers=2, buffer=2, k=4, optimised=False))
    assert e.propagator_step() == 0
    w = e.workers[0]
    steps = w.update_steps(10)
    list(steps)
    steps = w.update_steps(11)
    next(steps)  # blocked waiting for the propagator
    assert w.prop == 0
    assert e.propagator_step() == 1
    assert len(e.global_sketch) == 2
    assert w.prop == e.global_sketch.calc_hint() != 0
    list(steps)
    assert w.hint == w.prop


def test_optimised_b1_ownership_instrumented():
    rng = random.Random(4)
    e = ConcurrentSketch(EngineConfig(workers=2, buffer=1, k=4), instrument=True)
    running = [None, None]
    items = [list(range(w, 200, 2)) for w in range(2)]
    while any(items) or any(running):
        tok = rng.randrange(3)
        if tok == 2:
            e.propagator_step()
            continue
        if running[tok] is None and items[tok]:
            running[tok] = e.workers[tok].update_steps(items[tok].pop(0))
        if running[tok] is not None:
            try:
                next(running[tok])
            except StopIteration:
                running[tok] = None
    e.flush()
    seq = ThetaSketch(4, Oracle(0))
    for i in range(200):
        seq.update(i)
    assert e.global_sketch.samples == seq.samples


def test_ownership_violation_detected():
    e = ConcurrentSketch(EngineConfig(workers=1, buffer=1, k=4), instrument=True)
    ctx = e.workers[0]
    list(ctx.update_steps(1))  # half 0 handed to the propagator, writing into half 1
    ctx.cur = 0  # a buggy worker writing into the half it gave away
    with pytest.raises(OwnershipError):
        list(ctx.update_steps(2))


def test_flush_idle_is_noop():
    e = ConcurrentSketch(EngineConfig(workers=2, buffer=4, k=8))
    e.flush()
    assert e.merges == 0


@pytest.mark.parametrize("optimised", [False, True])
def test_flush_makes_buffered_updates_visible(optimised):
    cfg = EngineConfig(workers=4, buffer=16, k=4096, optimised=optimised)
    e = ConcurrentSketch(cfg)
    for w in range(4):
        drive(e, w, range(w * 16, w * 16 + 16))
    e.flush()
    assert len(e.global_sketch) == 64
    seq = ThetaSketch(4096, Oracle(0))
    for i in range(64):
        seq.update(i)
    assert e.query() == seq.query()


@pytest.mark.parametrize("optimised", [False, True])
def test_hints_non_increasing(optimised):
    cfg = EngineConfig(workers=2, buffer=3, k=16, optimised=optimised)
    e = ConcurrentSketch(cfg, instrument=True)
    for i in range(600):
        drive(e, i % 2, [i])
    for ctx in e.workers:
        assert ctx.hints_seen
        assert all(a >= b for a, b in zip(ctx.hints_seen, ctx.hints_seen[1:]))
        assert all(h != 0 for h in ctx.hints_seen)


def test_threaded_theta_matches_sequential():
    cfg = EngineConfig(workers=4, buffer=8, k=256, seed=9)
    e = engine_start(cfg)
    ts = [threading.Thread(target=lambda w=w: [e.workers[w].update(i) for i in range(w, 20000, 4)])
          for w in range(4)]
    for t in ts:
        t.start()
    mid = [e.query() for _ in range(50)]
    for t in ts:
        t.join()
    e.flush()
    e.stop()
    seq = ThetaSketch(256, Oracle(9))
    for i in range(20000):
        seq.update(i)
    assert e.global_sketch.samples == seq.samples
    assert e.query() == seq.query()
    assert all(v >= 0 for v in mid)
    assert e.offered() == 20000


def test_quantiles_engine_empty_query():
    e = ConcurrentSketch(EngineConfig(workers=2, buffer=5, k=8, sketch="quantiles"))
    with pytest.raises(EmptySketchError):
        e.query(0.5)


@pytest.mark.parametrize("optimised", [False, True])
def test_quantiles_engine_flush_equals_sequential_replay(optimised):
    # one worker: merges arrive in program order, so the global sketch must
    # equal a sequential sketch fed (value, coin) in that order
    cfg = EngineConfig(workers=1, buffer=5, k=8, seed=3, sketch="quantiles",
                       optimised=optimised)
    e = ConcurrentSketch(cfg)
    rng = random.Random(1)
    vals = [rng.random() for _ in range(999)]
    drive(e, 0, vals)
    e.flush()
    coins = Oracle(3).derive(0)
    seq = QuantilesSketch(8, Oracle(3))
    for j, v in enumerate(vals):
        seq.update_entry((v, coins.coin_at(j)))
    assert e.global_sketch.state_key() == seq.state_key()
    assert e.query(0.5) == seq.query(0.5)


def test_quantiles_engine_multi_worker_conserves_weight():
    cfg = EngineConfig(workers=3, buffer=4, k=8, seed=3, sketch="quantiles")
    e = ConcurrentSketch(cfg)
    for i in range(1000):
        drive(e, i % 3, [float(i)])
    e.flush()
    assert e.global_sketch.n == e.global_sketch.weight_total() == 1000


def test_locked_sketch_baseline():
    lk = LockedSketch(QuantilesSketch(4, Oracle(0)))
    for v in range(10):
        lk.update(float(v))
    assert lk.query(0.5) == 5.0
