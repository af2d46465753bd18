"""Physical NAND medium: geometry, per-page state and operation counters.

Pages inside a block must be programmed in ascending order and a page can
only be reprogrammed after its whole block has been erased. Every violation
raises :class:`FlashConstraintError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class FlashConstraintError(RuntimeError):
    pass


class CapacityExhausted(RuntimeError):
    pass


class PageState(IntEnum):
    FREE = 0
    LIVE = 1
    DEAD = 2


@dataclass(frozen=True)
class FlashGeometry:
    channels: int = 4
    luns_per_channel: int = 2
    blocks_per_lun: int = 1024
    pages_per_block: int = 128
    page_size: int = 16 * 1024

    def __post_init__(self):
        for name in ("channels", "luns_per_channel", "blocks_per_lun",
                     "pages_per_block", "page_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"geometry.{name} must be positive")

    @classmethod
    def desk(cls) -> "FlashGeometry":
        return cls(channels=1, luns_per_channel=2, blocks_per_lun=256, pages_per_block=32)

    @property
    def luns(self) -> int:
        return self.channels * self.luns_per_channel

    @property
    def blocks(self) -> int:
        return self.luns * self.blocks_per_lun

    @property
    def pba(self) -> int:
        return self.blocks * self.pages_per_block

    def lun_of(self, block: int) -> int:
        return block // self.blocks_per_lun


@dataclass
class DeviceCounters:
    logical_writes: int = 0
    migrations: int = 0
    erases: int = 0

    @property
    def physical_writes(self) -> int:
        return self.logical_writes + self.migrations

    def snapshot(self) -> tuple[int, int, int]:
        return self.logical_writes, self.migrations, self.erases


class FlashDevice:
    def __init__(self, geometry: FlashGeometry):
        self.geometry = geometry
        self.B = geometry.pages_per_block
        nblocks = geometry.blocks
        self.state = bytearray(geometry.pba)
        self.write_ptr = [0] * nblocks
        self.live = [0] * nblocks
        self.erase_seq = [0] * nblocks
        self.erase_count = [0] * nblocks
        self.counters = DeviceCounters()
        self._seq = 0
        self.n_free = geometry.pba
        self.n_live = 0
        self.n_dead = 0

    def block_of(self, addr: int) -> int:
        return addr // self.B

    def write_page(self, addr: int, migration: bool = False) -> None:
        b, off = divmod(addr, self.B)
        if self.state[addr] != PageState.FREE:
            raise FlashConstraintError(f"page {addr} is not free")
        if off != self.write_ptr[b]:
            raise FlashConstraintError(
                f"out-of-order program in block {b}: page {off}, pointer {self.write_ptr[b]}")
        self.state[addr] = PageState.LIVE
        self.write_ptr[b] = off + 1
        self.live[b] += 1
        self.n_free -= 1
        self.n_live += 1
        if migration:
            self.counters.migrations += 1
        else:
            self.counters.logical_writes += 1

    def invalidate_page(self, addr: int) -> None:
        if self.state[addr] != PageState.LIVE:
            raise FlashConstraintError(f"page {addr} is not live")
        self.state[addr] = PageState.DEAD
        self.live[addr // self.B] -= 1
        self.n_live -= 1
        self.n_dead += 1

    def erase_block(self, block: int) -> None:
        if self.live[block]:
            raise FlashConstraintError(
                f"block {block} still holds {self.live[block]} live pages")
        base = block * self.B
        used = self.write_ptr[block]
        self.state[base:base + self.B] = bytes(self.B)
        self.n_dead -= used
        self.n_free += used
        self.write_ptr[block] = 0
        self._seq += 1
        self.erase_seq[block] = self._seq
        self.erase_count[block] += 1
        self.counters.erases += 1

    def next_free_page(self, block: int) -> int:
        wp = self.write_ptr[block]
        if wp >= self.B:
            raise FlashConstraintError(f"block {block} is full")
        return block * self.B + wp

    def is_full(self, block: int) -> bool:
        return self.write_ptr[block] >= self.B

    def live_pages(self, block: int) -> list[int]:
        base = block * self.B
        st = self.state
        return [a for a in range(base, base + self.write_ptr[block]) if st[a] == PageState.LIVE]

    def count_states(self) -> tuple[int, int, int]:
        """Recount (free, live, dead) from the raw page array."""
        free = self.state.count(PageState.FREE)
        live = self.state.count(PageState.LIVE)
        return free, live, len(self.state) - free - live

    def wear_level(self) -> None:
        """Placeholder for a wear-levelling pass; intentionally does nothing."""


class LunSelector:
    """Pick the candidate with the most free pages; ties go round-robin.

    ``free_of`` maps a candidate to its free page count. Steering writes
    towards free space keeps a group's LUNs equally utilised even when it
    holds different numbers of blocks on each. One cursor per owner
    (typically a group) keeps tie-breaking deterministic.
    """

    def __init__(self):
        self._cursor: dict = {}

    def select(self, owner, candidates, free_of) -> int:
        n = len(candidates)
        if n == 0:
            raise CapacityExhausted("no candidate LUNs")
        start = self._cursor.get(owner, 0) % n
        best, best_free = -1, 0
        for k in range(n):
            i = (start + k) % n
            f = free_of(candidates[i])
            if f > best_free:
                best, best_free = i, f
        if best < 0:
            raise CapacityExhausted(f"no free space for {owner!r}")
        self._cursor[owner] = best + 1
        return best


def select_lun(candidates, free_of, selector: LunSelector | None = None, owner=None) -> int:
    """Index of the next candidate with free space (round-robin per ``owner``)."""
    selector = selector or LunSelector()
    return selector.select(owner, list(candidates), free_of)
