"""Page-mapped FTL core shared by every block manager.

Physical blocks are owned by groups (the block-to-group map, ``bgm``). A group
is split per LUN into subgroups; each subgroup keeps its full blocks (victim
candidates), its partially written blocks (the fill frontier) and its erased
blocks. Writes and garbage-collection migrations both go through
:meth:`BlockManager.handle_write`; subclasses decide where a page goes
(:meth:`find_target`) and who receives an erased block (:meth:`assign_erased`).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .flash import CapacityExhausted, FlashDevice, FlashGeometry, LunSelector, PageState

STAY, PROMOTE, DEMOTE = 0, 1, -1


class GCDeadlock(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockMeta:
    live_count: int
    erase_seq: int
    group_id: int
    write_ptr: int


class MappingTable:
    """Logical page -> physical page, with the reverse map for migrations."""

    def __init__(self, lba: int, pba: int):
        self.lba = lba
        self.l2p = [-1] * lba
        self.p2l = [-1] * pba
        self.mapped = 0

    def translate(self, addr: int) -> int | None:
        if not 0 <= addr < self.lba:
            raise IndexError(f"logical address {addr} outside [0, {self.lba})")
        p = self.l2p[addr]
        return None if p < 0 else p


class SubGroup:
    __slots__ = ("gid", "lun", "full", "open", "free", "free_pages")

    def __init__(self, gid: int, lun: int):
        self.gid = gid
        self.lun = lun
        self.full: set[int] = set()
        self.open: list[int] = []
        self.free: deque[int] = deque()
        self.free_pages = 0

    def __repr__(self):
        return (f"SubGroup(g={self.gid}, lun={self.lun}, full={len(self.full)}, "
                f"open={len(self.open)}, free={len(self.free)}, free_pages={self.free_pages})")


class Group:
    def __init__(self, gid: int, luns: int):
        self.id = gid
        self.size = 0
        self.held = 0
        self.subs = [SubGroup(gid, lun) for lun in range(luns)]
        self.freq = 0.0
        self.interval_writes = 0
        self.target_op = 0

    @property
    def free_pages(self) -> int:
        return sum(s.free_pages for s in self.subs)

    def actual_op(self, B: int) -> int:
        return self.held * B - self.size

    def blocks(self):
        for s in self.subs:
            yield from s.full
            yield from s.open
            yield from s.free

    def __repr__(self):
        return f"Group(id={self.id}, size={self.size}, held={self.held}, freq={self.freq:.4f})"


def pick_victim_lru(blocks, dev: FlashDevice) -> int | None:
    """Block erased longest ago (lowest erase sequence, then lowest id)."""
    seq = dev.erase_seq
    best = None
    best_key = None
    for b in blocks:
        k = (seq[b], b)
        if best_key is None or k < best_key:
            best, best_key = b, k
    return best


def pick_victim_greedy(blocks, dev: FlashDevice) -> int | None:
    """Block with fewest live pages; ties to the oldest erase, then lowest id."""
    live = dev.live
    seq = dev.erase_seq
    best = None
    best_key = None
    for b in blocks:
        k = (live[b], seq[b], b)
        if best_key is None or k < best_key:
            best, best_key = b, k
    return best


VICTIM_POLICIES = {"greedy": pick_victim_greedy, "lru": pick_victim_lru}


class BlockManager:
    """Base block manager: one page-mapped FTL, pluggable placement policy."""

    name = "base"

    def __init__(self, geometry: FlashGeometry, lba: int, policy: str = "greedy",
                 interval_fraction: float = 0.001):
        if not 0 < lba < geometry.pba:
            raise ValueError("need 0 < lba < pba")
        if policy not in VICTIM_POLICIES:
            raise ValueError(f"unknown cleaning policy {policy!r}")
        self.geometry = geometry
        self.dev = FlashDevice(geometry)
        self.B = geometry.pages_per_block
        self.lba = lba
        self.pba = geometry.pba
        self.op = self.pba - lba
        self.luns = geometry.luns
        self.mt = MappingTable(lba, self.pba)
        self.bgm = [-1] * geometry.blocks
        self.groups: dict[int, Group] = {}
        self.ladder: list[int] = []  # coldest -> hottest
        self.policy = policy
        self._pick = VICTIM_POLICIES[policy]
        self._selector = LunSelector()
        self._gc_busy: set[tuple[int, int]] = set()
        self._next_gid = 0
        self._obtain_depth = 0
        self._pinned = 0
        # GC starts once a subgroup is down to its last free block, which is
        # then reserved for migrations: a productive victim holds < B live pages
        self.gc_threshold = self.B + 1
        self.h = max(1, int(round(lba * interval_fraction)))
        self._since_interval = 0
        self.intervals = 0
        self.gc_count = 0
        self.borrowed_blocks = 0
        self.emergency_gcs = 0

    # --- groups and block ownership -------------------------------------

    def _new_group(self) -> Group:
        g = Group(self._next_gid, self.luns)
        self._next_gid += 1
        self.groups[g.id] = g
        return g

    def _give_block(self, block: int, gid: int) -> None:
        g = self.groups[gid]
        sub = g.subs[self.geometry.lun_of(block)]
        wp = self.dev.write_ptr[block]
        if wp == 0:
            sub.free.append(block)
            sub.free_pages += self.B
        elif wp >= self.B:
            sub.full.add(block)
        else:
            sub.open.append(block)
            sub.free_pages += self.B - wp
        self.bgm[block] = gid
        g.held += 1

    def _take_block(self, block: int) -> None:
        g = self.groups[self.bgm[block]]
        sub = g.subs[self.geometry.lun_of(block)]
        wp = self.dev.write_ptr[block]
        if block in sub.full:
            sub.full.discard(block)
        elif block in sub.open:
            sub.open.remove(block)
            sub.free_pages -= self.B - wp
        elif block in sub.free:
            sub.free.remove(block)
            sub.free_pages -= self.B
        g.held -= 1
        self.bgm[block] = -1

    def _merge_into(self, src: int, dst: int) -> None:
        """Relabel every block of ``src`` as belonging to ``dst`` (no data moves)."""
        gs, gd = self.groups[src], self.groups[dst]
        for lun in range(self.luns):
            a, b = gs.subs[lun], gd.subs[lun]
            for blk in a.full:
                self.bgm[blk] = dst
            for blk in a.open:
                self.bgm[blk] = dst
            for blk in a.free:
                self.bgm[blk] = dst
            b.full |= a.full
            b.open.extend(a.open)
            b.free.extend(a.free)
            b.free_pages += a.free_pages
        gd.held += gs.held
        gd.size += gs.size
        gd.freq += gs.freq
        gd.interval_writes += gs.interval_writes
        del self.groups[src]
        self.ladder.remove(src)

    def group_of_block(self, block: int) -> int:
        return self.bgm[block]

    def block_meta(self, block: int) -> BlockMeta:
        d = self.dev
        return BlockMeta(d.live[block], d.erase_seq[block], self.bgm[block], d.write_ptr[block])

    def translate(self, addr: int) -> int | None:
        return self.mt.translate(addr)

    # --- policy hooks ------------------------------------------------------

    def find_target(self, cur: int | None, addr: int, is_gc: bool) -> int:
        if cur is None:
            return self.ladder[0]
        return cur

    def on_placed(self, gid: int, addr: int, is_gc: bool, old: int | None = None) -> None:
        pass

    def assign_erased(self, block: int, owner: int) -> int:
        return owner

    def after_erase(self, block: int) -> None:
        pass

    def handle_interval_completion(self) -> None:
        pass

    def lender_key(self, sub: SubGroup, needy: int, lun_pref: int | None):
        return (-sub.free_pages, sub.lun != lun_pref, sub.gid)

    def lender_allowed(self, sub: SubGroup, needy: int) -> bool:
        return True

    # --- write path --------------------------------------------------------

    def write(self, addr: int) -> int:
        """Application write of one logical page."""
        page = self.handle_write(addr, False)
        self._since_interval += 1
        if self._since_interval >= self.h:
            self._since_interval = 0
            self.intervals += 1
            self.handle_interval_completion()
        return page

    def handle_write(self, addr: int, is_gc: bool = False, prefer_lun: int | None = None) -> int:
        mt = self.mt
        if not 0 <= addr < self.lba:
            raise IndexError(f"logical address {addr} outside [0, {self.lba})")
        old = mt.l2p[addr]
        B = self.B
        cur = self.bgm[old // B] if old >= 0 else None
        if self._pinned and cur is not None:
            target = cur
        else:
            target = self.find_target(cur, addr, is_gc)
        dev = self.dev
        if old >= 0:
            dev.invalidate_page(old)
            mt.p2l[old] = -1
            self.groups[cur].size -= 1
        else:
            mt.mapped += 1
        sub = self._pick_sub(target, is_gc, prefer_lun)
        if not sub.open:
            blk = sub.free.popleft()
            sub.open.append(blk)
        blk = sub.open[0]
        page = blk * B + dev.write_ptr[blk]
        dev.write_page(page, is_gc)
        sub.free_pages -= 1
        if dev.write_ptr[blk] >= B:
            sub.open.pop(0)
            sub.full.add(blk)
        mt.l2p[addr] = page
        mt.p2l[page] = addr
        self.groups[target].size += 1
        self.on_placed(target, addr, is_gc, cur)
        if sub.free_pages < self.gc_threshold:
            self._collect(sub)
        return page

    def _pick_sub(self, gid: int, is_gc: bool, prefer_lun: int | None) -> SubGroup:
        for _ in range(8):
            g = self.groups[gid]
            subs = g.subs
            if prefer_lun is not None and subs[prefer_lun].free_pages > 0:
                return subs[prefer_lun]
            if g.free_pages > 0:
                i = self._selector.select(gid, subs, _free_pages)
                return subs[i]
            self._obtain_block(gid, prefer_lun)
        raise CapacityExhausted(f"group {gid} cannot obtain free space")

    # --- garbage collection ------------------------------------------------

    def pick_victim(self, sub: SubGroup) -> int | None:
        return self._pick(sub.full, self.dev)

    def _collect(self, sub: SubGroup) -> None:
        """Clean ``sub`` until it has more than one block of free pages."""
        key = (sub.gid, sub.lun)
        if key in self._gc_busy:
            return
        self._gc_busy.add(key)
        try:
            B = self.B
            while sub.free_pages < self.gc_threshold and self.groups.get(sub.gid) is not None:
                # when the policy's pick would free nothing, take the emptiest block
                victim = self._next_victim(sub)
                if victim is None or self.dev.live[victim] >= B:
                    break
                self._gc(sub, victim)
        finally:
            self._gc_busy.discard(key)

    def garbage_collect(self, sub: SubGroup, recipient: int | None = None) -> tuple[int, int] | None:
        """One cleaning step in ``sub``: returns (erased block, migrations)."""
        victim = self.pick_victim(sub)
        if victim is None:
            return None
        return victim, self._gc(sub, victim, recipient)

    def _gc(self, sub: SubGroup, victim: int, recipient: int | None = None) -> int:
        dev = self.dev
        sub.full.discard(victim)
        owner = sub.gid
        lun = sub.lun
        pages = dev.live_pages(victim)
        p2l = self.mt.p2l
        for page in pages:
            self.handle_write(p2l[page], True, lun)
        if dev.live[victim]:
            raise GCDeadlock(f"victim {victim} still has live pages after migration")
        owner = self.bgm[victim]
        g = self.groups[owner]
        g.held -= 1
        self.bgm[victim] = -1
        dev.erase_block(victim)
        dest = recipient if recipient is not None else self.assign_erased(victim, owner)
        self._give_block(victim, dest)
        self.gc_count += 1
        self.after_erase(victim)
        return len(pages)

    # --- free-space lending ------------------------------------------------

    def _obtain_block(self, gid: int, lun_pref: int | None) -> None:
        """Give ``gid`` one erased block, borrowing or cleaning elsewhere if needed."""
        if self._obtain_depth > 4:
            raise CapacityExhausted("free-space recovery recursed too deep")
        B = self.B
        for _ in range(self.geometry.blocks):
            best = self._find_lender(gid, lun_pref)
            if best is not None:
                blk = best.free.pop()
                best.free_pages -= B
                self.groups[best.gid].held -= 1
                self._give_block(blk, gid)
                self.borrowed_blocks += 1
                return
            # emergency: clean a block whose live pages fit in its own subgroup
            # and keep them there, so the erased block is a net gain
            cand = None
            cand_key = None
            for g in self.groups.values():
                for sub in g.subs:
                    v = self.pick_victim_greedy_in(sub)
                    if v is None:
                        continue
                    lv = self.dev.live[v]
                    if lv >= B or lv > sub.free_pages:
                        continue
                    k = (lv, g.id == gid, sub.gid, v)
                    if cand_key is None or k < cand_key:
                        cand, cand_key = (sub, v, lv), k
            if cand is None:
                raise CapacityExhausted("no reclaimable block anywhere on the device")
            sub, v, lv = cand
            # a subgroup left unable to clean itself keeps the block and we retry
            give = sub.gid == gid or sub.free_pages - lv >= self.gc_threshold
            # the victim's pages fit in place, so no nested cleaning there
            key = (sub.gid, sub.lun)
            nested = key in self._gc_busy
            self._gc_busy.add(key)
            self._obtain_depth += 1
            self._pinned += 1
            try:
                self.emergency_gcs += 1
                self._gc(sub, v, recipient=gid if give else sub.gid)
            finally:
                self._obtain_depth -= 1
                self._pinned -= 1
                if not nested:
                    self._gc_busy.discard(key)
            if give:
                return
        raise CapacityExhausted(f"group {gid} cannot obtain free space")

    def _find_lender(self, gid: int, lun_pref: int | None) -> SubGroup | None:
        B = self.B
        best = None
        best_key = None
        for strict in (True, False):
            for g in self.groups.values():
                if g.id == gid:
                    continue
                for sub in g.subs:
                    if not sub.free:
                        continue
                    # a lender never drops below the cleaning threshold; the
                    # strict pass also honours the manager's lending rule
                    if sub.free_pages - B < self.gc_threshold:
                        continue
                    if strict and not self.lender_allowed(sub, gid):
                        continue
                    k = self.lender_key(sub, gid, lun_pref)
                    if best_key is None or k < best_key:
                        best, best_key = sub, k
            if best is not None:
                return best
        return None

    def pick_victim_greedy_in(self, sub: SubGroup) -> int | None:
        return pick_victim_greedy(sub.full, self.dev)

    def can_spare(self, sub: SubGroup) -> bool:
        """True if ``sub``'s group could give away a just-erased block and still
        absorb the live pages of its next cleaning victim in ``sub``."""
        v = self._next_victim(sub)
        if v is None:
            return self.groups[sub.gid].free_pages >= self.gc_threshold
        return sub.free_pages >= self.dev.live[v]

    def _next_victim(self, sub: SubGroup) -> int | None:
        # the block _collect would clean next
        victim = self.pick_victim(sub)
        if victim is not None and self.dev.live[victim] >= self.B:
            victim = self.pick_victim_greedy_in(sub)
        return victim

    # --- inspection ----------------------------------------------------------

    def group_sizes(self) -> list[int]:
        return [self.groups[g].size for g in self.ladder]

    def check_invariants(self) -> None:
        """Raise AssertionError if any bookkeeping invariant is broken."""
        dev = self.dev
        free, live, dead = dev.count_states()
        assert free + live + dead == self.pba
        assert (free, live, dead) == (dev.n_free, dev.n_live, dev.n_dead)
        assert live == self.mt.mapped
        assert sum(dev.live) == self.mt.mapped
        c = dev.counters
        assert c.physical_writes == c.logical_writes + c.migrations
        held = 0
        seen = [0] * self.geometry.blocks
        for g in self.groups.values():
            size = 0
            fp = 0
            nblk = 0
            for sub in g.subs:
                sfp = 0
                for b in sub.full:
                    assert dev.write_ptr[b] == self.B
                for b in sub.open:
                    assert 0 < dev.write_ptr[b] < self.B
                    sfp += self.B - dev.write_ptr[b]
                for b in sub.free:
                    assert dev.write_ptr[b] == 0
                    sfp += self.B
                assert sfp == sub.free_pages, (sub, sfp)
                fp += sfp
                for b in list(sub.full) + sub.open + list(sub.free):
                    assert self.bgm[b] == g.id
                    assert self.geometry.lun_of(b) == sub.lun
                    seen[b] += 1
                    size += dev.live[b]
                    nblk += 1
            assert nblk == g.held, (g, nblk)
            assert size == g.size, (g, size)
            held += g.held
        assert held == self.geometry.blocks
        assert all(s == 1 for s in seen)
        for addr, p in enumerate(self.mt.l2p):
            if p >= 0:
                assert dev.state[p] == PageState.LIVE
                assert self.mt.p2l[p] == addr
        assert sorted(self.ladder) == sorted(self.groups)


def _free_pages(sub: SubGroup) -> int:
    return sub.free_pages


def hit_rate(freq: float, size: int) -> float:
    if size <= 0:
        return 0.0 if freq <= 0 else math.inf
    return freq / size
