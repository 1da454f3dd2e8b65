"""Offline r-relaxation checkers.

For a query ``q`` with answer ``v`` let ``P`` be the updates that responded
before ``q`` was invoked and ``C`` the updates invoked no later than ``q``
responded (ties on the timestamp count as concurrent).  The answer is
admissible iff some ``A`` with ``P - (at most r updates) <= A <= C`` yields
``v`` when fed to a fresh sequential sketch.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from ..core import Oracle, as_bytes
from ..quantiles import QuantilesSketch
from ..theta import ThetaSketch
from .history import QUERY, UPDATE, HistoryLog, Operation

__all__ = [
    "Verdict",
    "QueryWindow",
    "query_windows",
    "theta_attainable",
    "theta_attainable_bruteforce",
    "check_relaxation_theta",
    "check_relaxation_quantiles",
    "BRUTE_FORCE_LIMIT",
    "QUANTILES_LIMIT",
]

BRUTE_FORCE_LIMIT = 12
QUANTILES_LIMIT = 16
QUANTILES_STATE_CAP = 200_000

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class Verdict:
    status: str
    query_index: int | None = None
    gap: float | None = None
    checked: int = 0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        if self.status == PASS:
            return f"pass ({self.checked} queries)"
        where = f" at query {self.query_index}" if self.query_index is not None else ""
        gap = f", gap {self.gap:.6g}" if self.gap is not None else ""
        return f"{self.status}{where}{gap}: {self.detail}".rstrip(": ")


@dataclass
class QueryWindow:
    query: Operation
    forced: list[Operation] = field(default_factory=list)    # P
    optional: list[Operation] = field(default_factory=list)  # C \ P


def query_windows(log: HistoryLog) -> list[QueryWindow]:
    ops = log.operations()
    updates = [o for o in ops if o.op == UPDATE]
    out = []
    for q in ops:
        if q.op != QUERY or q.resp is None:
            continue
        w = QueryWindow(q)
        for u in updates:
            if u.resp is not None and u.resp < q.inv:
                w.forced.append(u)
            elif u.inv <= q.resp:
                w.optional.append(u)
        out.append(w)
    return out


# -- Theta ---------------------------------------------------------------------------

def _est_subfull(size: int) -> float:
    return float(max(size - 1, 0))


def _max_removable(costs: Counter, budget: int) -> int:
    """Most hashes removable within ``budget`` omissions.

    ``costs`` maps an omission cost (forced updates carrying the hash) to the
    number of hashes with that cost; cheapest first is optimal.
    """
    removed = 0
    for cost in sorted(costs):
        if cost > budget:
            break
        take = min(costs[cost], budget // cost)
        removed += take
        budget -= take * cost
    return removed


def theta_attainable(forced: Sequence[float], optional: Sequence[float], r: int,
                     k: int) -> set[float]:
    """Every estimate reachable by dropping at most ``r`` forced updates and
    any subset of the optional ones.  ``forced`` may repeat hashes; dropping a
    hash from the set means dropping every forced update that carries it."""
    cost = Counter(forced)
    opt = set(optional) - set(cost)
    values: set[float] = set()

    # sub-full: any unique-set size between the fewest and most reachable
    lo = len(cost) - _max_removable(Counter(cost.values()), r)
    hi = len(cost) + len(opt)
    for s in range(lo, min(hi, k - 1) + 1):
        values.add(_est_subfull(s))

    # full: m is the k-th smallest iff exactly k-1 kept hashes lie below it
    below_costs: Counter = Counter()
    forced_below = opt_below = 0
    for m in sorted(set(cost) | opt):
        fewest = forced_below - _max_removable(below_costs, r)
        if fewest <= k - 1 <= forced_below + opt_below:
            values.add((k - 1) / m)
        if m in cost:
            forced_below += 1
            below_costs[cost[m]] += 1
        else:
            opt_below += 1
    return values


def theta_attainable_bruteforce(forced: Sequence[float], optional: Sequence[float],
                                r: int, k: int, oracle: Oracle | None = None) -> set[float]:
    """Reference: enumerate every admissible subset and run the real sketch."""
    oracle = oracle or Oracle(0)
    ops = [(h, True) for h in forced] + [(h, False) for h in optional]
    values = set()
    for mask in range(1 << len(ops)):
        dropped = sum(1 for i, (_, f) in enumerate(ops) if f and not mask >> i & 1)
        if dropped > r:
            continue
        s = ThetaSketch(k, oracle)
        for i, (h, _) in enumerate(ops):
            if mask >> i & 1:
                s.update_hash(h)
        values.add(s.query())
    return values


def _hashes(ops: Sequence[Operation], oracle: Oracle) -> list[float]:
    return [oracle.hash(as_bytes(o.arg)) for o in ops]


def check_relaxation_theta(log: HistoryLog, r: int, oracle: Oracle, k: int,
                           cross_check: bool = False) -> Verdict:
    """Check every query of a Theta-engine history against the r-relaxation.

    With ``cross_check`` windows with ``|C| <= 12`` are also enumerated
    exhaustively and any disagreement raises ``AssertionError``.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    windows = query_windows(log)
    for n, w in enumerate(windows):
        v = w.query.result
        if not isinstance(v, (int, float)):
            raise ValueError(f"query {w.query.index} has non-numeric answer {v!r}")
        forced, optional = _hashes(w.forced, oracle), _hashes(w.optional, oracle)
        values = theta_attainable(forced, optional, r, k)
        if cross_check and len(forced) + len(optional) <= BRUTE_FORCE_LIMIT:
            brute = theta_attainable_bruteforce(forced, optional, r, k, oracle)
            if brute != values:
                raise AssertionError(f"fast path {sorted(values)} != enumeration {sorted(brute)}")
        if v not in values:
            gap = min(abs(v - a) for a in values)
            return Verdict(FAIL, w.query.index, gap, n,
                           f"answer {v!r} not attainable with |P|={len(forced)}, "
                           f"|C\\P|={len(optional)}, r={r}")
    return Verdict(PASS, checked=len(windows))


# -- Quantiles -----------------------------------------------------------------------

def _worker_of(op: Operation) -> str:
    return op.thread


def _answer_of(sketch: QuantilesSketch, phi: float):
    return sketch.query(phi) if sketch.n else None


def check_relaxation_quantiles(log: HistoryLog, r: int, oracle: Oracle, k: int,
                               limit: int = QUANTILES_LIMIT,
                               state_cap: int = QUANTILES_STATE_CAP) -> Verdict:
    """Check a Quantiles-engine history by exhaustive search.

    Updates are replayed in any interleaving that keeps each worker's program
    order; worker ``w``'s ``j``-th update carries coin
    ``oracle.derive(w).coin_at(j)``.  The replay matches the engine only when
    local buffers never flush into levels, i.e. engine ``b < 2k``.  Windows
    with ``|C| > limit`` (or searches above ``state_cap`` states) give an
    explicit inconclusive verdict.
    """
    ops = log.operations()
    # coin index of every update within its worker's program order
    coin_of: dict[int, int] = {}
    seen: Counter = Counter()
    workers: dict[str, Oracle] = {}
    for o in ops:
        if o.op != UPDATE:
            continue
        wid = int(o.thread.lstrip("w"))
        workers.setdefault(o.thread, oracle.derive(wid))
        coin_of[o.index] = workers[o.thread].coin_at(seen[o.thread])
        seen[o.thread] += 1

    windows = query_windows(log)
    for n, w in enumerate(windows):
        size = len(w.forced) + len(w.optional)
        if size > limit:
            return Verdict(INCONCLUSIVE, w.query.index, None, n,
                           f"|C|={size} exceeds enumeration limit {limit}")
        verdict = _search_quantiles(w, r, oracle, k, coin_of, state_cap)
        if verdict is None:
            return Verdict(INCONCLUSIVE, w.query.index, None, n,
                           f"search exceeded {state_cap} states")
        if not verdict:
            return Verdict(FAIL, w.query.index, None, n,
                           f"answer {w.query.result!r} not reproducible within r={r}")
    return Verdict(PASS, checked=len(windows))


def _search_quantiles(w: QueryWindow, r: int, oracle: Oracle, k: int,
                      coin_of: dict[int, int], state_cap: int) -> bool | None:
    phi, target = w.query.arg, w.query.result
    forced_ids = {o.index for o in w.forced}
    lanes: dict[str, list[Operation]] = {}
    for o in sorted(w.forced + w.optional, key=lambda o: o.index):
        lanes.setdefault(_worker_of(o), []).append(o)
    lane_ops = list(lanes.values())
    # forced updates still ahead in each lane, from each position
    forced_left = [[sum(1 for o in lane[i:] if o.index in forced_ids)
                    for i in range(len(lane) + 1)] for lane in lane_ops]

    start = QuantilesSketch(k, oracle)
    stack = [((0,) * len(lane_ops), 0, start)]
    visited = set()
    while stack:
        pos, used, sk = stack.pop()
        key = (pos, used, sk.state_key())
        if key in visited:
            continue
        visited.add(key)
        if len(visited) > state_cap:
            return None
        if used + sum(fl[p] for fl, p in zip(forced_left, pos)) <= r:
            if _answer_of(sk, phi) == target:
                return True
        for li, lane in enumerate(lane_ops):
            p = pos[li]
            if p == len(lane):
                continue
            op = lane[p]
            nxt = pos[:li] + (p + 1,) + pos[li + 1:]
            # skip this update
            cost = used + (op.index in forced_ids)
            if cost <= r:
                stack.append((nxt, cost, sk))
            # ingest it
            child = QuantilesSketch.from_bytes(sk.to_bytes(), oracle)
            child.update_entry((float(op.arg), coin_of[op.index]))
            stack.append((nxt, used, child))
    return False

