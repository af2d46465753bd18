"""Over-provisioning allocation across groups of pages.

Each group ``x`` holds ``size`` logical pages, receives a fraction ``freq`` of
the update stream and is given ``op`` over-provisioned pages. Treated as an
independent uniform-workload SSD, its write amplification follows from the
equilibrium relation with ``LBA/PBA`` replaced by ``size / (size + op)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .wamodel import delta_at_equilibrium

INFINITE_WA = math.inf


class InfeasibleAllocation(ValueError):
    pass


@dataclass(frozen=True)
class GroupStat:
    size: float
    freq: float


def _stats(stats: Iterable) -> list[GroupStat]:
    out = []
    for s in stats:
        if isinstance(s, GroupStat):
            out.append(s)
        else:
            size, freq = s
            out.append(GroupStat(size, freq))
    return out


@lru_cache(maxsize=1 << 18)
def group_delta(size: float, op: float) -> float:
    """Fraction of live pages per victim for a group of ``size`` pages with ``op``
    spare pages. Returns 1.0 (infinite WA) when ``op`` is zero."""
    if size < 0 or op < 0:
        raise ValueError("size and op must be non-negative")
    if size == 0:
        return 0.0
    if op == 0:
        return 1.0
    return delta_at_equilibrium(size / (size + op))


def group_wa(size: float, op: float) -> float:
    d = group_delta(size, op)
    if d >= 1.0:
        return INFINITE_WA
    return 1.0 / (1.0 - d)


def total_wa(stats: Sequence, alloc: Sequence[float]) -> float:
    """Update-frequency weighted sum of per-group write amplification."""
    stats = _stats(stats)
    if len(stats) != len(alloc):
        raise ValueError("stats and allocation lengths differ")
    total = 0.0
    for st, op in zip(stats, alloc):
        if st.freq == 0:
            continue
        wa = group_wa(st.size, op)
        if math.isinf(wa):
            return INFINITE_WA
        total += st.freq * wa
    return total


def round_to_blocks(values: Sequence[float], total: int, block_size: int = 1) -> list[int]:
    """Scale ``values`` to sum to ``total`` and round to multiples of ``block_size``.

    Largest-remainder rounding: floor every share to whole blocks, hand the
    leftover blocks to the largest fractional remainders (ties to the lowest
    index). If ``total`` is not a multiple of ``block_size`` the final partial
    block goes to the next group in remainder order.
    """
    n = len(values)
    if n == 0:
        raise ValueError("need at least one group")
    if total < 0 or any(v < 0 for v in values):
        raise ValueError("negative allocation")
    s = float(sum(values))
    if s <= 0:
        shares = [total / n] * n
    else:
        shares = [v * total / s for v in values]
    units = [sh / block_size for sh in shares]
    whole = [int(math.floor(u + 1e-9)) for u in units]
    rem = [u - w for u, w in zip(units, whole)]
    left_pages = total - block_size * sum(whole)
    order = sorted(range(n), key=lambda i: (-rem[i], i))
    k = 0
    while left_pages >= block_size:
        whole[order[k % n]] += 1
        left_pages -= block_size
        k += 1
    out = [w * block_size for w in whole]
    if left_pages > 0:
        out[order[k % n]] += left_pages
    return out


def _space(stats, lba, pba):
    if lba <= 0 or pba <= lba:
        raise ValueError("need 0 < lba < pba")
    return pba - lba, pba / lba - 1.0


def alloc_by_size(stats, lba: int, pba: int, block_size: int = 1) -> list[int]:
    """Spare space proportional to group size: ``op_x = size_x * (PBA/LBA - 1)``."""
    stats = _stats(stats)
    op, v = _space(stats, lba, pba)
    return round_to_blocks([st.size * v for st in stats], op, block_size)


def alloc_by_frequency(stats, lba: int, pba: int, block_size: int = 1) -> list[int]:
    """Spare space proportional to update frequency: ``op_x = freq_x * OP``."""
    stats = _stats(stats)
    op, _ = _space(stats, lba, pba)
    return round_to_blocks([st.freq * op for st in stats], op, block_size)


def _mixed_raw(stats: list[GroupStat], lba: float, op: float) -> list[float]:
    v = op / lba
    fsum = sum(st.freq for st in stats)
    out = []
    for st in stats:
        f = st.freq / fsum if fsum > 0 else 1.0 / len(stats)
        out.append((st.size * v + f * op) / 2.0)
    return out


def hit_rate(st: GroupStat) -> float:
    if st.size <= 0:
        return math.inf if st.freq > 0 else 0.0
    return st.freq / st.size


def alloc_mixed(stats, lba: int, pba: int, block_size: int = 1,
                cold_threshold: float | None = 0.05,
                cold_fraction: float = 0.05) -> list[int]:
    """Average of the size-based and frequency-based allocations.

    When the coldest group's hit rate is below ``cold_threshold`` times the
    second coldest, that group gets a fixed ``cold_fraction`` of the smallest
    group's size and the rest is split by the mixed formula over the remaining
    groups. Pass ``cold_threshold=None`` to disable that rule.
    """
    stats = _stats(stats)
    if not stats:
        raise ValueError("need at least one group")
    op, _ = _space(stats, lba, pba)
    n = len(stats)

    cold = None
    populated = [i for i in range(n) if stats[i].size > 0]
    if cold_threshold is not None and len(populated) >= 2:
        ranked = sorted(populated, key=lambda i: (hit_rate(stats[i]), i))
        c0, c1 = ranked[0], ranked[1]
        if hit_rate(stats[c0]) < cold_threshold * hit_rate(stats[c1]):
            cold = c0

    if cold is None:
        raw = _mixed_raw(stats, lba, op)
        return round_to_blocks(raw, op, block_size)

    smallest = min(stats[i].size for i in populated)
    cold_op = cold_fraction * smallest
    cold_op = min(op, max(block_size, round(cold_op / block_size) * block_size))
    rest = [i for i in range(n) if i != cold]
    rest_stats = [stats[i] for i in rest]
    rest_lba = sum(st.size for st in rest_stats)
    rest_op = op - cold_op
    if rest_lba <= 0:
        raw_rest = [rest_op / len(rest)] * len(rest)
    else:
        raw_rest = _mixed_raw(rest_stats, rest_lba, rest_op)
    rounded = round_to_blocks(raw_rest, rest_op, block_size)
    out = [0] * n
    out[cold] = cold_op
    for i, v in zip(rest, rounded):
        out[i] = v
    return out


def alloc_optimal(stats, lba: int, pba: int, block_size: int = 1,
                  start: Sequence[int] | None = None) -> list[int]:
    """Exact minimum of the weighted WA on a ``block_size`` lattice.

    Hill climbing: starting from the size-based split (or ``start``), move one
    block at a time from the group whose loss raises the objective least to the
    group whose gain lowers it most, until no such move helps. The objective
    is separable and convex, so the fixed point is the lattice optimum.
    """
    stats = _stats(stats)
    n = len(stats)
    if n == 0:
        raise ValueError("need at least one group")
    op, _ = _space(stats, lba, pba)
    hungry = [i for i in range(n) if stats[i].freq > 0]
    if op // block_size < len(hungry):
        raise InfeasibleAllocation(
            f"{op // block_size} spare blocks cannot cover {len(hungry)} active groups")

    if start is not None and len(start) == n and sum(start) == op and min(start) >= 0:
        alloc = list(start)
    else:
        alloc = alloc_by_size(stats, lba, pba, block_size)

    # every written group needs at least one block before the objective is finite
    for i in hungry:
        if alloc[i] < block_size:
            need = block_size - alloc[i]
            donor = max(range(n), key=lambda j: (alloc[j] - (block_size if j in hungry else 0), -j))
            alloc[donor] -= need
            alloc[i] += need

    def cost(i, o):
        st = stats[i]
        if st.freq == 0:
            return 0.0
        return st.freq * group_wa(st.size, o)

    cur = [cost(i, alloc[i]) for i in range(n)]
    for _ in range(10 * (op // block_size + n) + 10):
        best_gain, gi = 0.0, -1
        best_loss, li = math.inf, -1
        for i in range(n):
            gain = cur[i] - cost(i, alloc[i] + block_size)
            if gain > best_gain:
                best_gain, gi = gain, i
            if alloc[i] >= block_size:
                loss = cost(i, alloc[i] - block_size) - cur[i]
                if loss < best_loss:
                    best_loss, li = loss, i
        if gi < 0:
            break
        if li == gi:
            # pick the cheapest donor other than the receiver
            best_loss, li = math.inf, -1
            for i in range(n):
                if i != gi and alloc[i] >= block_size:
                    loss = cost(i, alloc[i] - block_size) - cur[i]
                    if loss < best_loss:
                        best_loss, li = loss, i
        if li < 0 or not best_gain > best_loss + 1e-15:
            break
        alloc[gi] += block_size
        alloc[li] -= block_size
        cur[gi] = cost(gi, alloc[gi])
        cur[li] = cost(li, alloc[li])
    return alloc


# --- brute-force study of the mixed formula --------------------------------

GRID_HEADER = ["groups", "ratio", "Q", "config_id", "wa_mixed", "wa_optimal", "pct_off"]


def compositions(total: int, parts: int):
    """All ordered ways to write ``total`` as ``parts`` positive integers."""
    if parts < 1 or total < parts:
        return
    for cuts in itertools.combinations(range(1, total), parts - 1):
        prev = 0
        out = []
        for c in cuts:
            out.append(c - prev)
            prev = c
        out.append(total - prev)
        yield tuple(out)


def grid_configs(q: int, groups: int):
    """Unique (unordered) workloads with ``groups`` groups on a ``q`` x ``q`` grid.

    Yields tuples of (size_chunks, freq_chunks) pairs sorted canonically.
    """
    if groups < 1 or q < groups:
        raise ValueError(f"cannot split {q} chunks into {groups} non-empty groups")
    seen = set()
    sizes = list(compositions(q, groups))
    for s in sizes:
        for f in sizes:
            key = tuple(sorted(zip(s, f)))
            if key in seen:
                continue
            seen.add(key)
            yield key


def grid_study(q: int, group_counts: Iterable[int], ratios: Iterable[float],
               lba: int | None = None, block_size: int | None = None):
    """Compare the mixed formula against the hill-climbing optimum.

    Logical and frequency space are cut into ``q`` chunks; every group gets at
    least one chunk of each. Rows are ``(groups, ratio, Q, config_id,
    wa_mixed, wa_optimal, pct_off)`` in enumeration order.
    """
    group_counts = list(group_counts)
    ratios = list(ratios)
    if q < 1:
        raise ValueError("Q must be positive")
    for r in ratios:
        if not 0 < r < 1:
            raise ValueError(f"ratio {r} outside (0, 1)")
    lba = lba or 100 * q
    rows = []
    for n in group_counts:
        configs = list(grid_configs(q, n))
        for r in ratios:
            pba = int(round(lba / r))
            op = pba - lba
            bs = block_size or max(1, op // 300)
            for cid, cfg in enumerate(configs):
                stats = [GroupStat(sc * lba // q, fc / q) for sc, fc in cfg]
                mixed = alloc_mixed(stats, lba, pba, bs, cold_threshold=None)
                best = alloc_optimal(stats, lba, pba, bs)
                wa_m = total_wa(stats, mixed)
                wa_o = total_wa(stats, best)
                pct = 100.0 * (wa_m / wa_o - 1.0)
                rows.append((n, r, q, cid, wa_m, wa_o, pct))
    return rows


def write_grid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for n, r, q, cid, wm, wo, pct in rows:
            w.writerow([n, f"{r:g}", q, cid, f"{wm:.9f}", f"{wo:.9f}", f"{pct:.6f}"])


def summarize_grid(rows):
    """Mean and max percent departure keyed by (groups, ratio, Q)."""
    acc: dict = {}
    for n, r, q, _cid, _wm, _wo, pct in rows:
        acc.setdefault((n, r, q), []).append(pct)
    return {k: (sum(v) / len(v), max(v), len(v)) for k, v in acc.items()}
