"""Wolf block manager.

Every ``h`` application writes the per-group update frequencies are folded
into an exponentially weighted average, spare-space targets are recomputed
with the mixed allocation rule, groups are re-sorted by hit rate and may be
created or merged. Erased blocks go to the group furthest below its target;
groups holding more spare space than they need are compacted so their blocks
can be handed over (movement operations).
"""

from __future__ import annotations

import math

from .allocation import GroupStat, alloc_mixed
from .flash import FlashGeometry
from .ftl import hit_rate
from .managers import TieredManager, apply_floor, fdp_allocate_op


class WolfManager(TieredManager):
    name = "wolf"

    def __init__(self, geometry: FlashGeometry, lba: int, policy: str = "greedy",
                 interval_fraction: float = 0.001, a: float = 1.0 / 3.0, q: float = 2.0,
                 w: int = 50, f: int | None = None, cold_threshold: float | None = 0.05,
                 cold_fraction: float = 0.05, fp_rate: float = 0.3, detector=None,
                 freq_source: str = "measured", max_groups: int = 16,
                 min_op: int | None = None, **_):
        super().__init__(geometry, lba, policy, interval_fraction, detector, fp_rate)
        if not 0 < a <= 1:
            raise ValueError("a must lie in (0, 1]")
        if q <= 1:
            raise ValueError("q must exceed 1")
        if freq_source not in ("measured", "doubling"):
            raise ValueError(f"unknown freq_source {freq_source!r}")
        self.a = a
        self.Q = q
        self.rung_step = q
        self.w = w
        self.F = f if f is not None else geometry.luns * self.B
        self.cold_threshold = cold_threshold
        self.cold_fraction = cold_fraction
        self.freq_source = freq_source
        self.max_groups = max_groups
        # every populated group keeps two blocks per LUN of spare space so its
        # cleaning always finds dead pages
        self.min_op = 2 * geometry.luns * self.B if min_op is None else min_op
        self.freeze_until: dict[int, int] = {}
        self.ban_until = 0
        self._converged: dict[tuple[int, int], int] = {}
        self._moving = False
        self._move_pending = False
        self.movement_gcs = 0
        self.created = 0
        self.merged = 0

        cold, hot = self._new_group(), self._new_group()
        self.ladder = [cold.id, hot.id]
        per_lun = geometry.blocks_per_lun
        for b in range(geometry.blocks):
            # the hotter group starts with two blocks per LUN, the rest is cold
            self._give_block(b, hot.id if b % per_lun < 2 else cold.id)
        cold.freq = hot.freq = 0.5
        half = self.op // 2 // self.B * self.B
        cold.target_op = self.op - half
        hot.target_op = half
        self._reladder()

    # --- writes --------------------------------------------------------------

    def write(self, addr):
        page = super().write(addr)
        if self._move_pending:
            self.consider_movement_operations()
        return page

    def wolf_handle_write(self, addr: int, is_gc: bool = False) -> int:
        return self.handle_write(addr, is_gc)

    # --- interval bookkeeping ----------------------------------------------

    def handle_interval_completion(self):
        h = float(self.h)
        a = self.a
        for g in self.groups.values():
            u = g.interval_writes / h
            g.freq = g.freq * (1.0 - a) + a * u
            g.interval_writes = 0
        self.sort_sgv()
        if self.merge_or_create_groups():
            self.sort_sgv()
        self._retarget()
        self.consider_movement_operations()

    def _frozen(self, gid: int) -> bool:
        return self.freeze_until.get(gid, -1) > self.intervals

    def sort_sgv(self) -> None:
        """Order groups by hit rate; frozen groups keep their slot."""
        lad = self.ladder
        fixed = {i: gid for i, gid in enumerate(lad) if self._frozen(gid)}
        movable = sorted((gid for gid in lad if not self._frozen(gid)),
                         key=lambda gid: (self.hit_rate(gid), gid))
        it = iter(movable)
        self.ladder = [fixed[i] if i in fixed else next(it) for i in range(len(lad))]
        self._reladder()

    def hit_rate(self, gid: int) -> float:
        g = self.groups[gid]
        return hit_rate(g.freq, g.size)

    def _retarget(self) -> None:
        gs = [self.groups[gid] for gid in self.ladder]
        if self.freq_source == "doubling":
            prev = [g.target_op for g in gs]
            start = prev if sum(prev) == self.op else None
            targets = fdp_allocate_op([g.size for g in gs], self.lba, self.pba, self.B, start)
        else:
            # a nearly empty group that sees no writes only gets the floor
            # below, so it cannot flip the cold-group rule
            idx = [i for i, g in enumerate(gs) if g.size >= self.F or g.freq > 0] \
                or list(range(len(gs)))
            stats = [GroupStat(gs[i].size, gs[i].freq) for i in idx]
            part = alloc_mixed(stats, self.lba, self.pba, self.B,
                               self.cold_threshold, self.cold_fraction)
            targets = [0] * len(gs)
            for i, t in zip(idx, part):
                targets[i] = t
        targets = apply_floor(targets, [g.size for g in gs], self.min_op, self.B)
        for g, t in zip(gs, targets):
            g.target_op = t

    # --- group creation and merging --------------------------------------------

    def _ratio(self, lo: int, hi: int) -> float:
        a, b = self.hit_rate(lo), self.hit_rate(hi)
        if a <= 0:
            return math.inf if b > 0 else 1.0
        return b / a

    def _settled(self, gid: int) -> bool:
        # frozen or tiny groups have no meaningful hit rate yet
        return not self._frozen(gid) and self.groups[gid].size >= self.F

    def merge_or_create_groups(self) -> bool:
        """Apply at most one structural change; returns True if one happened."""
        now = self.intervals
        lad = self.ladder
        # counts are kept per unordered pair and survive re-sorting, which
        # shuffles groups of similar hit rate from one interval to the next
        adjacent = set()
        for lo, hi in zip(lad, lad[1:]):
            if not (self._settled(lo) and self._settled(hi)):
                continue
            key = (min(lo, hi), max(lo, hi))
            adjacent.add(key)
            # leaky count: one noisy interval does not undo a long convergence
            n = self._converged.get(key, 0)
            self._converged[key] = n + 1 if self._ratio(lo, hi) < self.Q else max(0, n - 1)
        if now < self.ban_until:
            return False

        if len(lad) > 2:
            # groups that shrank below F are folded into their closest neighbour
            for i, gid in enumerate(lad):
                if self._frozen(gid) or self.groups[gid].size >= self.F:
                    continue
                self._merge(gid, self._closest_neighbour(i))
                return True
            for (lo, hi), n in self._converged.items():
                if n >= self.w and (lo, hi) in adjacent:
                    self._merge(lo, hi)
                    return True

        if len(lad) >= self.group_cap():
            return False
        # a wide gap between neighbours is split before a new top is tried
        for i in range(len(lad) - 1):
            lo, hi = lad[i], lad[i + 1]
            if not (self._settled(lo) and self._settled(hi)):
                continue
            # static data below has no frequency to split from; the cold
            # group rule already covers it
            if self.hit_rate(lo) > 0 and self._ratio(lo, hi) > 2 * self.Q:
                self._create(i + 1)
                return True
        top, below = lad[-1], lad[-2]
        if self._settled(top) and self._settled(below) and self._ratio(below, top) >= self.Q:
            self._create(len(lad))
            return True
        return False

    def _closest_neighbour(self, i: int) -> int:
        lad = self.ladder
        if i == 0:
            return lad[1]
        if i == len(lad) - 1:
            return lad[i - 1]
        me = self.hit_rate(lad[i])
        lo, hi = self.hit_rate(lad[i - 1]), self.hit_rate(lad[i + 1])
        if me <= 0 or lo <= 0:
            return lad[i - 1]
        return lad[i - 1] if abs(math.log(me / lo)) <= abs(math.log(hi / me)) else lad[i + 1]

    def _merge(self, a: int, b: int) -> None:
        # the larger group survives and keeps its filters
        src, dst = (a, b) if self.groups[a].size <= self.groups[b].size else (b, a)
        self._merge_groups(src, dst)
        self.freeze_until.pop(src, None)
        self._converged = {k: v for k, v in self._converged.items() if src not in k}
        self.ban_until = self.intervals + self.w
        self.merged += 1

    def _create(self, at: int) -> None:
        g = self._new_group()
        g.freq = 0.0
        self.ladder.insert(at, g.id)
        self.freeze_until[g.id] = self.intervals + self.w
        self.ban_until = self.intervals + self.w
        self.created += 1
        self._reladder()

    # --- erased blocks and movement operations -------------------------------

    def _deficit(self, g) -> int:
        return g.target_op - g.actual_op(self.B)

    def _neediest(self):
        best, best_key = None, None
        for g in self.groups.values():
            d = self._deficit(g)
            k = (d, self.hit_rate(g.id), -g.id)
            if best_key is None or k > best_key:
                best, best_key = g, k
        return best

    def assign_erased(self, block, owner):
        """Hand an erased block to the group furthest below its target."""
        best = self._neediest()
        if best is None or best.id == owner or self._deficit(best) <= 0:
            return owner
        sub = self.groups[owner].subs[self.geometry.lun_of(block)]
        if not self.can_spare(sub):
            # the owner needs this block to keep a migration destination
            return owner
        return best.id

    def handle_erase(self, block: int, owner: int) -> int:
        return self.assign_erased(block, owner)

    def after_erase(self, block):
        self._move_pending = True

    def consider_movement_operations(self) -> None:
        """Compact groups holding surplus spare space while someone is short."""
        self._move_pending = False
        if self._moving or self._gc_busy or self._obtain_depth:
            return
        self._moving = True
        B = self.B
        try:
            budget = 4 * self.geometry.blocks
            while budget > 0:
                budget -= 1
                needy = self._neediest()
                if needy is None or self._deficit(needy) <= 0:
                    break
                pick = None
                pick_key = None
                for g in self.groups.values():
                    surplus = -self._deficit(g)
                    if surplus < B or g.id == needy.id:
                        continue
                    for sub in g.subs:
                        v = self.pick_victim_greedy_in(sub)
                        if v is None:
                            continue
                        live = self.dev.live[v]
                        if live >= B or sub.free_pages < live:
                            continue
                        k = (-surplus, live, g.id, sub.lun)
                        if pick_key is None or k < pick_key:
                            pick, pick_key = (sub, v), k
                if pick is None:
                    break
                self.movement_gcs += 1
                self._gc(pick[0], pick[1])
        finally:
            self._moving = False
            self._move_pending = False
