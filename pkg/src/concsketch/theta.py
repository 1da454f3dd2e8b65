"""KMV Theta sketch with the composable extensions (snapshot, hint, filter)."""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import Any, Iterable

from .core import Oracle, as_bytes

__all__ = ["ThetaSketch", "ThetaSnapshot", "theta_factory"]

# Binary record layout (big-endian):
#   magic "THT1" | k u32 | seed u64 | theta f64 | est f64 | count u32 | count x u64
# Hashes are 64-bit fixed point (hash * 2**64), sorted ascending.  The seed is
# stored as its unsigned 64-bit image.
_MAGIC = b"THT1"
_HEADER = struct.Struct(">4sIQddI")
_FIXED = 2.0 ** 64


@dataclass(frozen=True)
class ThetaSnapshot:
    """Query-only copy: the ``est`` value read in one load."""

    est: float

    def query(self, arg: Any = None) -> float:
        return self.est


class ThetaSketch:
    """K-minimum-values distinct counter.

    Holds the ``k`` smallest unique hashes.  ``theta`` stays 1 until the set
    first fills, then tracks the largest retained hash.  ``est`` is the only
    attribute a concurrent reader may touch; mutators write it last.
    """

    def __init__(self, k: int, oracle: Oracle):
        if k < 2:
            raise ValueError(f"k must be >= 2, got {k}")
        self.k = k
        self.oracle = oracle
        self._heap: list[float] = []  # negated hashes, max on top
        self._members: set[float] = set()
        self.theta = 1.0
        self.est = 0.0

    # -- sequential API ----------------------------------------------------
    def update(self, item: Any) -> None:
        self.update_hash(self.oracle.hash(as_bytes(item)))

    def update_hash(self, h: float) -> None:
        if self._insert(h):
            self.est = (len(self._heap) - 1) / self.theta

    def _insert(self, h: float) -> bool:
        """Insert without publishing ``est``; True if the sample set changed."""
        if h >= self.theta or h in self._members:
            return False
        heap = self._heap
        if len(heap) < self.k:
            heapq.heappush(heap, -h)
            self._members.add(h)
            if len(heap) == self.k:
                self.theta = -heap[0]
        else:
            evicted = -heapq.heapreplace(heap, -h)
            self._members.discard(evicted)
            self._members.add(h)
            self.theta = -heap[0]
        return True

    def query(self, arg: Any = None) -> float:
        return self.est

    def merge(self, other: "ThetaSketch") -> None:
        """Keep the k smallest of the union; ``est`` is published once, last."""
        self._check_compatible(other)
        changed = False
        for h in other._members:
            changed |= self._insert(h)
        if changed:
            self.est = (len(self._heap) - 1) / self.theta

    def clear(self) -> None:
        self._heap = []
        self._members = set()
        self.theta = 1.0
        self.est = 0.0

    # -- composable extensions ---------------------------------------------
    def snapshot(self, target: Any = None) -> ThetaSnapshot:
        return ThetaSnapshot(self.est)

    def calc_hint(self) -> float:
        return self.theta

    def should_add(self, hint: float, item: Any) -> bool:
        return self.oracle.hash(as_bytes(item)) < hint

    # -- inspection ----------------------------------------------------------
    @property
    def samples(self) -> list[float]:
        return sorted(self._members)

    def __len__(self) -> int:
        return len(self._heap)

    def compatible(self, other: "ThetaSketch") -> bool:
        return self.k == other.k and self.oracle.seed == other.oracle.seed

    def _check_compatible(self, other: "ThetaSketch") -> None:
        if self.k != other.k:
            raise ValueError(f"cannot merge sketches with k={self.k} and k={other.k}")
        if self.oracle.seed != other.oracle.seed:
            raise ValueError("cannot merge sketches built with different hash seeds")

    @classmethod
    def from_hashes(cls, k: int, oracle: Oracle, hashes: Iterable[float]) -> "ThetaSketch":
        s = cls(k, oracle)
        for h in hashes:
            s.update_hash(h)
        return s

    # -- binary record -------------------------------------------------------
    def to_bytes(self) -> bytes:
        fixed = [int(h * _FIXED) for h in self.samples]
        head = _HEADER.pack(_MAGIC, self.k, self.oracle.seed & ((1 << 64) - 1),
                            self.theta, self.est, len(fixed))
        return head + struct.pack(f">{len(fixed)}Q", *fixed)

    @classmethod
    def from_bytes(cls, data: bytes, oracle: Oracle | None = None) -> "ThetaSketch":
        magic, k, seed, theta, est, count = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise ValueError("not a Theta sketch record")
        fixed = struct.unpack_from(f">{count}Q", data, _HEADER.size)
        s = cls(k, oracle if oracle is not None else Oracle(seed))
        kept = [q / _FIXED for q in fixed]
        s._heap = [-h for h in reversed(kept)]
        s._members = set(kept)
        s.theta = theta
        s.est = est
        return s

    def __repr__(self) -> str:
        return f"ThetaSketch(k={self.k}, retained={len(self)}, theta={self.theta:.6g}, est={self.est:.6g})"


def theta_factory(k: int, seed: int):
    """Engine factory: every sketch, local or global, shares one hash function."""
    oracle = Oracle(seed)
    return lambda worker_id=None: ThetaSketch(k, oracle)
