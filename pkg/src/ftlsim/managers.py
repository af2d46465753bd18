"""Reference block managers: the single-group baseline and the FDP-style
manager with a fixed group ladder, assumed doubling frequencies, LRU cleaning
and adjacent-only block donation."""

from __future__ import annotations

from .allocation import GroupStat, InfeasibleAllocation, alloc_optimal
from .detector import TemperatureDetector
from .flash import FlashGeometry
from .ftl import DEMOTE, PROMOTE, STAY, BlockManager, SubGroup


class BaselineManager(BlockManager):
    """All pages in one group; each LUN is cleaned independently."""

    name = "baseline"

    def __init__(self, geometry: FlashGeometry, lba: int, policy: str = "greedy",
                 interval_fraction: float = 0.001, **_):
        super().__init__(geometry, lba, policy, interval_fraction)
        g = self._new_group()
        self.ladder.append(g.id)
        for b in range(geometry.blocks):
            self._give_block(b, g.id)
        g.freq = 1.0
        g.target_op = self.op

    def baseline_handle_write(self, addr: int) -> int:
        return self.write(addr)



class TieredManager(BlockManager):
    """Groups ordered coldest -> hottest; pages move one rung per classification.

    ``detector`` is anything with ``classify(gid, addr, is_gc)`` and
    ``record(gid, addr, size)``; the default is the Bloom-filter detector.
    Optional detector hooks: ``bind(manager)``, ``track(addr, old, new)`` on
    every placement, ``merge(src, dst)`` and ``drop(gid)``.
    """

    # assumed per-page heat ratio between adjacent rungs, used by oracles to
    # place a rung that holds no pages yet
    rung_step = 2.0

    def __init__(self, geometry: FlashGeometry, lba: int, policy: str,
                 interval_fraction: float, detector=None, fp_rate: float = 0.3):
        super().__init__(geometry, lba, policy, interval_fraction)
        self.detector = detector if detector is not None else TemperatureDetector(fp_rate)
        bind = getattr(self.detector, "bind", None)
        if bind is not None:
            bind(self)
        self._track = getattr(self.detector, "track", None)
        self.pos: dict[int, int] = {}
        self.promotions = 0
        self.demotions = 0
        self.ladder_version = 0

    def _reladder(self) -> None:
        self.pos = {gid: i for i, gid in enumerate(self.ladder)}
        self.ladder_version += 1

    def find_target(self, cur, addr, is_gc):
        if cur is None:
            return self.ladder[0]
        d = self.detector.classify(cur, addr, is_gc)
        if d == STAY:
            return cur
        i = self.pos[cur]
        if d == PROMOTE:
            if i + 1 < len(self.ladder):
                self.promotions += 1
                return self.ladder[i + 1]
            self.on_top_promotion(addr)
            return cur
        if d == DEMOTE and i > 0:
            self.demotions += 1
            return self.ladder[i - 1]
        return cur

    def on_top_promotion(self, addr: int) -> None:
        pass

    def on_placed(self, gid, addr, is_gc, old=None):
        if self._track is not None:
            self._track(addr, old, gid)
        if not is_gc:
            g = self.groups[gid]
            # an update counts against the group whose copy it invalidates
            src = self.groups.get(old, g) if old is not None else g
            src.interval_writes += 1
            self.detector.record(gid, addr, g.size)

    def _merge_groups(self, src: int, dst: int) -> None:
        self._merge_into(src, dst)
        merge = getattr(self.detector, "merge", None)
        if merge is not None:
            merge(src, dst)
        drop = getattr(self.detector, "drop", None)
        if drop is not None:
            drop(src)
        self._reladder()

    def group_cap(self) -> int:
        # every group keeps min_op spare pages; the floors may claim at most
        # half the spare space so cleaning still finds dead pages to reclaim
        return max(1, min(self.max_groups, self.op // max(1, 2 * self.min_op)))

    def group_freqs(self) -> list[float]:
        return [self.groups[g].freq for g in self.ladder]

    def group_targets(self) -> list[int]:
        return [self.groups[g].target_op for g in self.ladder]


def apply_floor(targets, sizes, floor: int, block_size: int) -> list[int]:
    """Raise every populated group's target to ``floor`` pages, taking the
    difference block by block from the groups furthest above the floor."""
    out = list(targets)
    n = len(out)
    need = [max(0, floor - out[i]) if sizes[i] > 0 else 0 for i in range(n)]
    if sum(need) == 0 or floor * sum(1 for s in sizes if s > 0) > sum(out):
        return out
    for i in range(n):
        out[i] += need[i]
    owed = sum(need)
    while owed > 0:
        j = max(range(n), key=lambda k: (out[k] - (floor if sizes[k] > 0 else 0), -k))
        take = min(owed, block_size, out[j] - (floor if sizes[j] > 0 else 0))
        if take <= 0:
            break
        out[j] -= take
        owed -= take
    return out


def doubling_freqs(sizes) -> list[float]:
    """Update frequency per group if every rung is twice as hot per page as the one below."""
    w = [s * 2.0 ** i for i, s in enumerate(sizes)]
    tot = sum(w)
    if tot <= 0:
        n = len(w)
        return [1.0 / n] * n
    return [x / tot for x in w]


def fdp_allocate_op(sizes, lba: int, pba: int, block_size: int = 1, start=None) -> list[int]:
    """Optimal spare-space split under the assumed doubling frequencies."""
    freqs = doubling_freqs(sizes)
    stats = [GroupStat(s, f if s > 0 else 0.0) for s, f in zip(sizes, freqs)]
    try:
        return alloc_optimal(stats, lba, pba, block_size, start)
    except InfeasibleAllocation:
        return alloc_optimal(stats, lba, pba, 1, start)


class FdpManager(TieredManager):
    """Fixed ladder, assumed doubling frequencies, adjacent-only donation.

    A new hottest rung is added whenever more than ``F`` promotions were
    attempted out of the current top. Groups are never merged and there are no
    movement operations: spare space only moves when a cleaned block is handed
    to a neighbour that is further below its target.
    """

    name = "fdp"

    def __init__(self, geometry: FlashGeometry, lba: int, policy: str = "lru",
                 interval_fraction: float = 0.001, detector=None, fp_rate: float = 0.3,
                 f: int | None = None, max_groups: int = 8, min_op: int | None = None, **_):
        super().__init__(geometry, lba, policy, interval_fraction, detector, fp_rate)
        self.F = f if f is not None else geometry.luns * self.B
        self.max_groups = max_groups
        self.min_op = 2 * geometry.luns * self.B if min_op is None else min_op
        self._top_attempts = 0
        g = self._new_group()
        self.ladder.append(g.id)
        for b in range(geometry.blocks):
            self._give_block(b, g.id)
        self._reladder()
        self._retarget()

    # --- structure -------------------------------------------------------

    def on_top_promotion(self, addr):
        self._top_attempts += 1

    def _maybe_create(self) -> bool:
        if self._top_attempts <= self.F or len(self.ladder) >= self.group_cap():
            return False
        self._top_attempts = 0
        g = self._new_group()
        self.ladder.append(g.id)
        self._reladder()
        return True

    def _retarget(self) -> None:
        sizes = [self.groups[g].size for g in self.ladder]
        prev = [self.groups[g].target_op for g in self.ladder]
        start = prev if sum(prev) == self.op else None
        targets = fdp_allocate_op(sizes, self.lba, self.pba, self.B, start)
        targets = apply_floor(targets, sizes, self.min_op, self.B)
        freqs = doubling_freqs(sizes)
        for gid, t, f in zip(self.ladder, targets, freqs):
            self.groups[gid].target_op = t
            self.groups[gid].freq = f if self.groups[gid].size else 0.0

    def handle_interval_completion(self):
        for g in self.groups.values():
            g.interval_writes = 0
        self._maybe_create()
        self._retarget()
        self._reclaim_dead()

    def _reclaim_dead(self) -> None:
        # a group that stops receiving writes never cleans, so blocks holding
        # only dead pages would stay out of reach; erasing them costs nothing
        for gid in list(self.ladder):
            g = self.groups[gid]
            for sub in g.subs:
                for v in [b for b in sub.full if self.dev.live[b] == 0]:
                    if -self._deficit(gid) < self.B:
                        break
                    self._gc(sub, v)

    def assumed_rates(self) -> list[float]:
        """Per-page update probability FDP assumes for each rung, plus one above."""
        sizes = [self.groups[g].size for g in self.ladder]
        tot = sum(s * 2.0 ** i for i, s in enumerate(sizes))
        c = 1.0 / tot if tot > 0 else 1.0 / self.lba
        return [c * 2.0 ** i for i in range(len(sizes) + 1)]

    # --- erased blocks -------------------------------------------------------

    def _deficit(self, gid: int) -> int:
        g = self.groups[gid]
        return g.target_op - g.actual_op(self.B)

    def assign_erased(self, block, owner):
        i = self.pos[owner]
        best, best_def = owner, self._deficit(owner)
        for j in (i - 1, i + 1):
            if 0 <= j < len(self.ladder):
                gid = self.ladder[j]
                d = self._deficit(gid)
                if d > 0 and d > best_def:
                    best, best_def = gid, d
        if best != owner:
            sub = self.groups[owner].subs[self.geometry.lun_of(block)]
            if not self.can_spare(sub):
                return owner
        return best

    def lender_key(self, sub: SubGroup, needy: int, lun_pref):
        adjacent = abs(self.pos[sub.gid] - self.pos[needy]) == 1
        return (not adjacent, -sub.free_pages, sub.lun != lun_pref, sub.gid)
