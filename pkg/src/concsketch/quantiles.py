"""Mergeable Quantiles sketch: 2k base buffer, weighted levels, coin-driven zip.

Entries are ``(value, coin)`` tuples.  Level ``i`` holds ``k`` sorted entries,
each standing for ``2**(i+1)`` stream items (one zip per level on top of the
base buffer's), so ``len(base) + sum(2k * 2**i) == n`` over valid levels.
``bit_pattern`` marks the valid levels and behaves like a binary counter of
base-buffer flushes.

Entries are ordered by ``(value, coin)`` so that the state after a flush
depends only on the multiset of buffered entries, not their arrival order.

Concurrent readers only see what the writer publishes in ``_cell``, a tuple
``(bit_pattern, base_buffer_list, base_buffer_len)`` replaced in one store.
A level is only ever written while its bit is clear, and the published
``bit_pattern`` only grows, which is what makes the double collect in
:meth:`QuantilesSketch.snapshot` sound.
"""

from __future__ import annotations

import math
import struct
from heapq import merge as _merge_sorted
from operator import itemgetter
from typing import Any, Callable, Sequence

from .core import Oracle

__all__ = [
    "EmptySketchError",
    "SnapshotRetryError",
    "QuantilesSketch",
    "quantiles_factory",
    "zip_tuples",
    "level_weight",
]

Entry = tuple  # (value: float, coin: int)

_by_value = itemgetter(0)

# Binary record layout (big-endian):
#   magic "QNT1" | k u32 | seed u64 | n u64 | bit_pattern u64 | buffered u32
#   | buffered x (f64 value, u8 coin)          base buffer, insertion order
#   | for each set bit of bit_pattern, ascending: k x (f64 value, u8 coin)
_MAGIC = b"QNT1"
_HEADER = struct.Struct(">4sIQQQI")
_ENTRY = struct.Struct(">dB")


class EmptySketchError(ValueError):
    """Query on a sketch that has summarised nothing."""


class SnapshotRetryError(RuntimeError):
    """Double collect did not stabilise within the retry cap."""


def zip_tuples(buffer: Sequence[Entry]) -> list[Entry]:
    """Halve a sorted buffer of even length.

    The XOR of all stored coins picks the start index (0 or 1); every second
    entry from there is kept.
    """
    if len(buffer) % 2:
        raise ValueError(f"zip needs an even-length buffer, got {len(buffer)}")
    parity = 0
    for entry in buffer:
        parity ^= entry[1]
    return list(buffer[parity::2])


def level_weight(lvl: int) -> int:
    """Stream items represented by one entry of level ``lvl``."""
    return 2 << lvl


def _bits(pattern: int):
    lvl = 0
    while pattern:
        if pattern & 1:
            yield lvl
        pattern >>= 1
        lvl += 1


class QuantilesSketch:
    def __init__(self, k: int, oracle: Oracle):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.oracle = oracle
        self.levels: list[list[Entry] | None] = []
        self.n = 0
        self._buf: list[Entry] = []
        self._cell: tuple[int, list[Entry], int] = (0, self._buf, 0)
        self.copied_levels = 0  # set on snapshot targets

    @property
    def bit_pattern(self) -> int:
        return self._cell[0]

    @property
    def base_buffer(self) -> list[Entry]:
        """Base-buffer entries in ``(value, coin)`` order."""
        _, buf, blen = self._cell
        return sorted(buf[:blen])

    # -- sequential API ----------------------------------------------------
    def update(self, val: float) -> None:
        val = float(val)
        if math.isnan(val):
            raise ValueError("NaN cannot be ordered")
        self.update_entry((val, self.oracle.coin()))

    def update_entry(self, entry: Entry) -> None:
        """Ingest a ``(value, coin)`` tuple whose coin was drawn elsewhere."""
        buf = self._buf
        buf.append(entry)
        self.n += 1
        if len(buf) == 2 * self.k:
            tmp = zip_tuples(sorted(buf))
            self._buf = []
            self.propagate(tmp, 0)
        else:
            self._cell = (self._cell[0], buf, len(buf))

    def propagate(self, tmp: list[Entry], start: int) -> None:
        """Carry a sorted ``k``-entry array into the levels from ``start`` up.

        Merges with each valid level on the way to the first invalid level at
        or above ``start`` and installs the result there.  One publication of
        the new bit pattern makes the whole carry visible.
        """
        pattern = self._cell[0]
        target = start
        while pattern >> target & 1:
            target += 1
        mask = 0
        for lvl in range(start, target):
            tmp = zip_tuples(list(_merge_sorted(tmp, self.levels[lvl])))
            mask |= 1 << lvl
        mask |= 1 << target
        while len(self.levels) <= target:
            self.levels.append(None)
        self.levels[target] = tmp
        self._cell = (pattern ^ mask, self._buf, len(self._buf))

    def query(self, phi: float) -> float:
        if not 0.0 <= phi <= 1.0:
            raise ValueError(f"phi must be in [0, 1], got {phi}")
        pattern, buf, blen = self._cell
        tuples = [(e[0], 1) for e in buf[:blen]]
        total = blen
        for lvl in _bits(pattern):
            w = level_weight(lvl)
            tuples.extend((e[0], w) for e in self.levels[lvl])
            total += w * self.k
        if total == 0:
            raise EmptySketchError("empty sketch")
        tuples.sort(key=_by_value)
        pos = min(math.floor(total * phi), total - 1)
        acc = 0
        for val, w in tuples:
            acc += w
            if acc > pos:
                return val
        raise AssertionError("weights do not cover the stream")  # pragma: no cover

    def merge(self, other: "QuantilesSketch") -> None:
        """Union: carry each valid level of ``other`` in at its own height,
        then re-ingest its base buffer entries in their arrival order."""
        if other.k != self.k:
            raise ValueError(f"cannot merge sketches with k={self.k} and k={other.k}")
        pattern, buf, blen = other._cell
        for lvl in _bits(pattern):
            self.n += self.k * level_weight(lvl)
            self.propagate(list(other.levels[lvl]), lvl)
        for entry in buf[:blen]:
            self.update_entry(entry)

    def clear(self) -> None:
        self.levels = []
        self.n = 0
        self._buf = []
        self._cell = (0, self._buf, 0)

    # -- composable extensions ---------------------------------------------
    def snapshot(self, target: "QuantilesSketch | None" = None,
                 max_retries: int | None = None) -> "QuantilesSketch":
        """Double-collect copy into ``target`` (a previous snapshot, or fresh).

        Only levels up to the highest bit that differs from ``target``'s
        pattern are copied; above it the levels cannot have changed.
        """
        if target is None:
            target = QuantilesSketch(self.k, self.oracle)
        copied = 0
        attempts = 0
        while True:
            pattern, buf, blen = self._cell
            diff = pattern ^ target._cell[0]
            top = diff.bit_length()
            while len(target.levels) < top:
                target.levels.append(None)
            for lvl in range(top):
                if pattern >> lvl & 1:
                    target.levels[lvl] = list(self.levels[lvl])
                    copied += 1
            staged = buf[:blen]
            # levels are consistent only if no propagation happened meanwhile
            target._cell = (pattern, staged, blen)
            if self._cell[0] == pattern:
                break
            attempts += 1
            if max_retries is not None and attempts >= max_retries:
                raise SnapshotRetryError(
                    f"snapshot did not stabilise after {attempts} retries "
                    f"(last pattern {pattern:#x})")
        target._buf = staged
        target.n = blen + sum(self.k * level_weight(lvl) for lvl in _bits(pattern))
        target.copied_levels = copied
        return target

    def fresh(self, other: "QuantilesSketch") -> bool:
        return self._cell[0] == other._cell[0]

    def calc_hint(self) -> float:
        return 1

    def should_add(self, hint: float, item: Any) -> bool:
        return True

    # -- inspection ----------------------------------------------------------
    def weight_total(self) -> int:
        pattern, _, blen = self._cell
        return blen + sum(self.k * level_weight(lvl) for lvl in _bits(pattern))

    def valid_levels(self) -> dict[int, list[Entry]]:
        return {lvl: self.levels[lvl] for lvl in _bits(self._cell[0])}

    def state_key(self) -> tuple:
        """Hashable summary of the full state, for replay comparisons."""
        return (self.n, self._cell[0], tuple(self.base_buffer),
                tuple((lvl, tuple(v)) for lvl, v in self.valid_levels().items()))

    # -- binary record -------------------------------------------------------
    def to_bytes(self) -> bytes:
        pattern, buf, blen = self._cell
        parts = [_HEADER.pack(_MAGIC, self.k, self.oracle.seed & ((1 << 64) - 1),
                              self.n, pattern, blen)]
        parts.extend(_ENTRY.pack(*e) for e in buf[:blen])
        for lvl in _bits(pattern):
            parts.extend(_ENTRY.pack(*e) for e in self.levels[lvl])
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, oracle: Oracle | None = None) -> "QuantilesSketch":
        magic, k, seed, n, pattern, blen = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise ValueError("not a Quantiles sketch record")
        s = cls(k, oracle if oracle is not None else Oracle(seed))
        off = _HEADER.size

        def take(count):
            nonlocal off
            out = [_ENTRY.unpack_from(data, off + i * _ENTRY.size) for i in range(count)]
            off += count * _ENTRY.size
            return out

        s._buf = take(blen)
        for lvl in _bits(pattern):
            while len(s.levels) <= lvl:
                s.levels.append(None)
            s.levels[lvl] = take(k)
        s.n = n
        s._cell = (pattern, s._buf, blen)
        return s

    def __repr__(self) -> str:
        return f"QuantilesSketch(k={self.k}, n={self.n}, bit_pattern={self.bit_pattern:#b})"


def quantiles_factory(k: int, seed: int) -> Callable[[int | None], QuantilesSketch]:
    """Engine factory.  Each worker gets its own coin stream, derived from
    ``(seed, worker_id)``; both of a worker's local sketches share it."""
    root = Oracle(seed)
    streams: dict[int, Oracle] = {}

    def make(worker_id: int | None = None) -> QuantilesSketch:
        if worker_id is None:
            return QuantilesSketch(k, root)
        oracle = streams.setdefault(worker_id, root.derive(worker_id))
        return QuantilesSketch(k, oracle)

    return make
