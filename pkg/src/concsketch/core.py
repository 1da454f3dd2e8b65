"""Randomness oracle and the composable-sketch contract.

Every random choice a sketch makes is delegated to an :class:`Oracle`, so a
sketch run is a deterministic function of ``(seed, input)``.  Theta sketches
consume the oracle's hash; Quantiles sketches consume its coin stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Protocol, runtime_checkable

import xxhash

MASK64 = (1 << 64) - 1
_UNIT = 2.0 ** -53
_GOLDEN = 0x9E3779B97F4A7C15
_INT64 = struct.Struct(">q")


def splitmix64(x: int) -> int:
    """SplitMix64 output function (finaliser) on a 64-bit word."""
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def encode_int(value: int) -> bytes:
    """Encode a signed 64-bit integer as 8 big-endian bytes."""
    return _INT64.pack(value)


def as_bytes(item: Any) -> bytes:
    """Coerce an item to the byte string the oracle hashes.

    ``bytes`` pass through, ``int`` uses :func:`encode_int`, ``str`` is UTF-8.
    """
    if isinstance(item, bytes):
        return item
    if isinstance(item, int):
        return _INT64.pack(item)
    if isinstance(item, str):
        return item.encode("utf-8")
    raise TypeError(f"unsupported item type {type(item).__name__}")


def _check_seed(seed: int) -> int:
    if not -(1 << 63) <= seed <= MASK64:
        raise ValueError(f"seed {seed} is not a 64-bit integer")
    return seed


@dataclass
class Oracle:
    """Seeded hash to ``[0, 1)`` plus a random-access coin stream.

    The hash keeps the top 53 bits of a keyed xxh64 fingerprint, so every
    output is an exact double strictly below 1.  Coin ``i`` is the low bit of
    a SplitMix64 block computed at counter ``i``; ``coin_cursor`` is the next
    index :meth:`coin` will return.  Only one thread may advance a given
    oracle's cursor.
    """

    seed: int
    coin_cursor: int = 0

    def __post_init__(self) -> None:
        _check_seed(self.seed)
        self._key = self.seed & MASK64
        # decorrelates the coin stream from derive()
        self._coin_key = self._key ^ 0x5851F42D4C957F2D

    def hash(self, item: bytes) -> float:
        return (xxhash.xxh64_intdigest(item, self._key) >> 11) * _UNIT

    def hash64(self, item: bytes) -> int:
        """The 53-bit hash as an integer, i.e. ``hash(item) * 2**53``."""
        return xxhash.xxh64_intdigest(item, self._key) >> 11

    def coin_at(self, index: int) -> int:
        return splitmix64((self._coin_key + index * _GOLDEN) & MASK64) & 1

    def coin(self) -> int:
        bit = self.coin_at(self.coin_cursor)
        self.coin_cursor += 1
        return bit

    def derive(self, stream_id: int) -> "Oracle":
        """Independent oracle for a sub-stream, e.g. one per worker thread."""
        return Oracle(splitmix64(self._key ^ splitmix64(stream_id & MASK64)))


@runtime_checkable
class ComposableSketch(Protocol):
    """Operations the concurrent engine needs from a sketch.

    ``snapshot`` may run concurrently with ``merge`` (one merging thread);
    everything else is single-threaded.  ``calc_hint`` never returns 0, and
    ``should_add(hint, item)`` is a pure predicate that only rejects items
    that cannot change the state of a sketch whose hint was ``hint``.
    """

    k: int

    def update(self, item: Any) -> None: ...

    def query(self, arg: Any = None) -> Any: ...

    def merge(self, other: Any) -> None: ...

    def snapshot(self, target: Any = None) -> Any: ...

    def calc_hint(self) -> float: ...

    def should_add(self, hint: float, item: Any) -> bool: ...

    def clear(self) -> None: ...
