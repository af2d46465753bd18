"""Per-group temperature detection with two rotating Bloom filters.

Each group owns an active and a passive filter. Application writes insert the
logical address into the active filter; after as many application writes to
the group as it holds pages, the passive filter is dropped, the active one
becomes passive and a fresh active filter is sized for the current group.
An application update seen by both filters is hot for its group (promote);
a garbage-collection migration seen by neither is cold (demote).
"""

from __future__ import annotations

import math

from .ftl import DEMOTE, PROMOTE, STAY

_M64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


class BloomFilter:
    """Bit-array membership filter using double hashing from one 64-bit mix."""

    __slots__ = ("capacity", "fp_rate", "m", "k", "bits", "count")

    def __init__(self, capacity: int, fp_rate: float = 0.3):
        if not 0 < fp_rate < 1:
            raise ValueError("fp_rate must lie in (0, 1)")
        capacity = max(1, int(capacity))
        self.capacity = capacity
        self.fp_rate = fp_rate
        ln2 = math.log(2.0)
        self.m = max(8, int(math.ceil(-capacity * math.log(fp_rate) / (ln2 * ln2))))
        self.k = max(1, int(round(self.m / capacity * ln2)))
        self.bits = bytearray((self.m + 7) // 8)
        self.count = 0

    def _positions(self, key: int):
        h = _mix64(key)
        h1 = h & 0xFFFFFFFF
        h2 = (h >> 32) | 1
        m = self.m
        return [(h1 + i * h2) % m for i in range(self.k)]

    def add(self, key: int) -> None:
        bits = self.bits
        for p in self._positions(key):
            bits[p >> 3] |= 1 << (p & 7)
        self.count += 1

    def __contains__(self, key: int) -> bool:
        bits = self.bits
        for p in self._positions(key):
            if not bits[p >> 3] & (1 << (p & 7)):
                return False
        return True

    @property
    def bits_per_element(self) -> float:
        return self.m / self.capacity


class _GroupFilters:
    __slots__ = ("active", "passive", "writes", "window")

    def __init__(self, size: int, fp_rate: float):
        self.active = BloomFilter(size, fp_rate)
        self.passive = BloomFilter(size, fp_rate)
        self.writes = 0
        self.window = max(1, size)


class TemperatureDetector:
    def __init__(self, fp_rate: float = 0.3):
        self.fp_rate = fp_rate
        self._groups: dict[int, _GroupFilters] = {}
        self.rotations = 0

    def _get(self, gid: int, size: int = 1) -> _GroupFilters:
        f = self._groups.get(gid)
        if f is None:
            f = self._groups[gid] = _GroupFilters(size, self.fp_rate)
        return f

    def classify(self, gid: int, addr: int, is_gc: bool) -> int:
        f = self._groups.get(gid)
        if f is None:
            return DEMOTE if is_gc else STAY
        in_active = addr in f.active
        in_passive = addr in f.passive
        if not is_gc and in_active and in_passive:
            return PROMOTE
        if is_gc and not in_active and not in_passive:
            return DEMOTE
        return STAY

    def record(self, gid: int, addr: int, group_size: int) -> None:
        """Note an application write of ``addr`` into group ``gid``."""
        f = self._get(gid, group_size)
        f.active.add(addr)
        f.writes += 1
        if f.writes >= f.window:
            self.rotate(gid, group_size)

    def rotate(self, gid: int, group_size: int) -> None:
        f = self._get(gid, group_size)
        f.passive = f.active
        f.active = BloomFilter(max(1, group_size), self.fp_rate)
        f.writes = 0
        f.window = max(1, group_size)
        self.rotations += 1

    def drop(self, gid: int) -> None:
        self._groups.pop(gid, None)

    def reset(self, gid: int, group_size: int) -> None:
        self._groups[gid] = _GroupFilters(group_size, self.fp_rate)
