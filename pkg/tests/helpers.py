"""Small-device drivers and invariant checks shared by the unit, property and
acceptance tests."""

import math

from ftlsim.flash import FlashGeometry
from ftlsim.managers import BaselineManager, FdpManager
from ftlsim.sim import RunConfig
from ftlsim.wolf import WolfManager
from ftlsim.workloads import KModalSpec, KModalWorkload, OracleDetector, make_rng


def tiny_geometry(blocks_per_lun=16, pages=8, luns=2):
    return FlashGeometry(channels=1, luns_per_channel=luns, blocks_per_lun=blocks_per_lun,
                         pages_per_block=pages)


def make_manager(kind, geometry=None, ratio=0.7, policy=None, detector=None, **kw):
    geo = geometry or tiny_geometry()
    lba = int(ratio * geo.pba)
    if kind == "baseline":
        return BaselineManager(geo, lba, policy or "greedy", **kw)
    if kind == "fdp":
        return FdpManager(geo, lba, policy or "lru", detector=detector, **kw)
    return WolfManager(geo, lba, policy or "greedy", detector=detector, **kw)


def sgv_sorted(m) -> bool:
    """Non-frozen groups appear in ascending hit-rate order."""
    rates = [m.hit_rate(g) for g in m.ladder if not m._frozen(g)]
    return all(a <= b for a, b in zip(rates, rates[1:]))


class IntervalProbe:
    """Wraps a tiered manager and records per-interval invariant violations."""

    def __init__(self, m):
        self.m = m
        self.bad_sum = []
        self.bad_order = []
        self.checked = 0
        orig_retarget = m._retarget
        orig_interval = m.handle_interval_completion

        def retarget():
            # the ladder has just been re-sorted at this point
            if isinstance(m, WolfManager) and not sgv_sorted(m):
                self.bad_order.append(m.intervals)
            orig_retarget()

        def interval():
            orig_interval()
            self.checked += 1
            tot = sum(m.groups[g].target_op for g in m.ladder)
            if tot != m.op:
                self.bad_sum.append((m.intervals, tot))

        m._retarget = retarget
        m.handle_interval_completion = interval


def drive(m, addrs):
    for a in addrs:
        m.write(int(a))


def kmodal_addrs(lba, freqs, n, seed=0, swap_at=None, swap=(0, 1)):
    """Address list from a k-modal workload, optionally swapping two groups."""
    wl = KModalWorkload(KModalSpec.equal(lba, freqs, seed), lba=lba)
    out = []
    for i in range(n):
        if swap_at is not None and i == swap_at:
            wl.swap(*swap)
        out.append(wl.next())
    return out


def run_random(kind, seed, n_writes, ratio=0.7, freqs=(0.1, 0.9), oracle=False, geo=None, **kw):
    """Fill the device, then issue ``n_writes`` k-modal updates; returns the manager."""
    geo = geo or tiny_geometry()
    lba = int(ratio * geo.pba)
    wl = KModalWorkload(KModalSpec.equal(lba, freqs, seed), lba=lba)
    det = OracleDetector(wl) if oracle and kind != "baseline" else None
    m = make_manager(kind, geo, ratio, detector=det, **kw)
    for a in range(lba):
        m.write(a)
    rng = make_rng(seed + 1)
    for _ in range(n_writes):
        if rng.random() < 0.002:
            x, y = rng.choice(len(freqs), 2, replace=False)
            wl.swap(int(x), int(y))
        m.write(wl.next())
    return m


def small_config(**kw) -> RunConfig:
    cfg = RunConfig(geometry=tiny_geometry(blocks_per_lun=64, pages=16))
    lba = cfg.lba
    cfg.warmup = 2 * lba
    cfg.measured = 2 * lba
    cfg.window = lba // 4
    cfg.wolf.interval_fraction = 0.02
    cfg.fdp.interval_fraction = 0.02
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def unimodal(values, rel=1e-12) -> bool:
    """Non-increasing up to the minimum, then non-decreasing."""
    i = min(range(len(values)), key=values.__getitem__)
    tol = lambda a: rel * max(1.0, abs(a))
    down = all(values[k + 1] <= values[k] + tol(values[k]) for k in range(i))
    up = all(values[k + 1] >= values[k] - tol(values[k]) for k in range(i, len(values) - 1))
    return down and up and all(math.isfinite(v) for v in values)
