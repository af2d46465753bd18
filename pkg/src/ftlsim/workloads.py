"""Logical write streams: uniform, k-modal with frequency swaps, trace replay.

Random draws use numpy's PCG64 bit generator seeded explicitly; generators
pull numbers in batches but hand out one address at a time so that swaps
take effect exactly at their scheduled write index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ftl import DEMOTE, PROMOTE, STAY

RNG_NAME = "numpy.PCG64"
_BATCH = 8192


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def uniform_next(rng: np.random.Generator, lba: int) -> int:
    """One uniformly drawn logical address in [0, lba)."""
    return int(rng.integers(0, lba))


@dataclass(frozen=True)
class GroupDef:
    start: int
    length: int
    freq: float


@dataclass
class KModalSpec:
    groups: list[GroupDef]
    seed: int = 0
    writes: int | None = None

    def __post_init__(self):
        if not self.groups:
            raise ValueError("need at least one group")
        tot = sum(g.freq for g in self.groups)
        if abs(tot - 1.0) > 1e-9:
            raise ValueError(f"group frequencies sum to {tot}, not 1")
        spans = sorted((g.start, g.start + g.length) for g in self.groups)
        for g in self.groups:
            if g.length <= 0 or g.start < 0 or g.freq < 0:
                raise ValueError(f"bad group {g}")
        for (_, e), (s, _) in zip(spans, spans[1:]):
            if s < e:
                raise ValueError("group address ranges overlap")

    @property
    def span(self) -> int:
        return max(g.start + g.length for g in self.groups)

    @classmethod
    def equal(cls, lba: int, freqs, seed: int = 0) -> "KModalSpec":
        """``len(freqs)`` contiguous groups of (nearly) equal size covering ``lba``."""
        n = len(freqs)
        cuts = [round(i * lba / n) for i in range(n + 1)]
        return cls([GroupDef(cuts[i], cuts[i + 1] - cuts[i], f) for i, f in enumerate(freqs)], seed)

    @classmethod
    def sized(cls, lba: int, fractions, freqs, seed: int = 0) -> "KModalSpec":
        """Groups with the given size fractions of ``lba``, laid out in order."""
        if len(fractions) != len(freqs):
            raise ValueError("fractions and freqs differ in length")
        tot = sum(fractions)
        cuts = [0]
        acc = 0.0
        for fr in fractions:
            acc += fr
            cuts.append(round(acc / tot * lba))
        return cls([GroupDef(cuts[i], cuts[i + 1] - cuts[i], f)
                    for i, f in enumerate(freqs)], seed)


@dataclass
class SwapSchedule:
    events: list[tuple[int, tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        idx = [i for i, _ in self.events]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("swap indices must be strictly increasing")
        for i, (x, y) in self.events:
            if i < 0 or x == y:
                raise ValueError(f"bad swap event {(i, (x, y))}")


class KModalWorkload:
    """Pick a group by its update probability, then a page uniformly inside it.

    Frequencies are attached to slots; a swap exchanges which address ranges
    two slots point at, so the per-range probabilities trade places at once.
    """

    def __init__(self, spec: KModalSpec, swaps: SwapSchedule | None = None, lba: int | None = None):
        if lba is not None and spec.span > lba:
            raise ValueError(f"groups cover {spec.span} pages but LBA is {lba}")
        self.spec = spec
        self.swaps = list((swaps or SwapSchedule()).events)
        self.rng = make_rng(spec.seed)
        n = len(spec.groups)
        self.slot_freq = np.array([g.freq for g in spec.groups])
        self._cum = np.cumsum(self.slot_freq)
        self._cum[-1] = 1.0
        self.owner = list(range(n))  # slot -> group definition
        self.slot_of = list(range(n))  # group definition -> slot
        self.index = 0
        self._slots = np.empty(0, dtype=np.int64)
        self._fracs = np.empty(0)
        self._k = 0
        self._next_swap = 0
        self._starts = [g.start for g in spec.groups]
        self._lengths = [g.length for g in spec.groups]
        self._rate = [0.0] * n
        self.version = 0
        self._refresh_rates()

    def _refresh_rates(self):
        for gi, g in enumerate(self.spec.groups):
            self._rate[gi] = self.slot_freq[self.slot_of[gi]] / g.length

    def _refill(self):
        u = self.rng.random(_BATCH)
        self._slots = np.searchsorted(self._cum, u, side="right").tolist()
        self._fracs = self.rng.random(_BATCH).tolist()
        self._k = 0

    def swap(self, x: int, y: int) -> None:
        """Exchange the update frequencies of groups ``x`` and ``y``."""
        sx, sy = self.slot_of[x], self.slot_of[y]
        self.owner[sx], self.owner[sy] = y, x
        self.slot_of[x], self.slot_of[y] = sy, sx
        self.version += 1
        self._refresh_rates()

    def _apply_swaps(self):
        while self._next_swap < len(self.swaps) and self.swaps[self._next_swap][0] <= self.index:
            _, (x, y) = self.swaps[self._next_swap]
            self.swap(x, y)
            self._next_swap += 1

    def __iter__(self):
        return self

    def __next__(self) -> int:
        if self.spec.writes is not None and self.index >= self.spec.writes:
            raise StopIteration
        return self.next()

    def next(self) -> int:
        self._apply_swaps()
        if self._k >= len(self._slots):
            self._refill()
        slot = self._slots[self._k]
        frac = self._fracs[self._k]
        self._k += 1
        gi = self.owner[slot]
        self.index += 1
        return self._starts[gi] + int(frac * self._lengths[gi])

    def group_of(self, addr: int) -> int | None:
        for gi, (s, n) in enumerate(zip(self._starts, self._lengths)):
            if s <= addr < s + n:
                return gi
        return None

    def rate(self, addr: int) -> float:
        """Current probability that one write hits ``addr``."""
        gi = self.group_of(addr)
        return 0.0 if gi is None else self._rate[gi]

    def current_freqs(self) -> list[float]:
        return [float(self.slot_freq[self.slot_of[gi]]) for gi in range(len(self.spec.groups))]


def kmodal_next(workload: KModalWorkload) -> int:
    return workload.next()


class UniformWorkload(KModalWorkload):
    def __init__(self, lba: int, seed: int = 0):
        super().__init__(KModalSpec([GroupDef(0, lba, 1.0)], seed), lba=lba)

    def group_of(self, addr):
        return 0 if 0 <= addr < self._lengths[0] else None


class TraceError(ValueError):
    pass


def load_trace(path, lba: int | None = None):
    """Yield page addresses from a text trace, one decimal number per line."""
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if not (s.isascii() and s.isdigit()):
                raise TraceError(f"{path}:{n}: not an unsigned page address: {s!r}")
            a = int(s)
            if lba is not None and a >= lba:
                raise TraceError(f"{path}:{n}: address {a} outside [0, {lba})")
            yield a


def write_trace(addrs, path, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            for h in header.splitlines():
                fh.write(f"# {h}\n")
        for a in addrs:
            fh.write(f"{int(a)}\n")


class TraceWorkload:
    """Replays an address sequence (wrapping at the end); the per-page truth is
    the empirical frequency over the whole sequence."""

    def __init__(self, addrs, lba: int):
        arr = np.asarray(addrs, dtype=np.int64)
        if arr.size == 0:
            raise TraceError("trace holds no writes")
        if arr.min() < 0 or arr.max() >= lba:
            raise TraceError(f"trace addresses outside [0, {lba})")
        self.addrs = arr.tolist()
        counts = np.bincount(arr, minlength=lba)
        self._rate = (counts / arr.size).tolist()
        self.index = 0
        self.version = 0

    @classmethod
    def from_file(cls, path, lba: int) -> "TraceWorkload":
        addrs = list(load_trace(path, lba))
        if not addrs:
            raise TraceError(f"{path}: trace holds no writes")
        return cls(addrs, lba)

    def next(self) -> int:
        a = self.addrs[self.index % len(self.addrs)]
        self.index += 1
        return a

    def rate(self, addr: int) -> float:
        return self._rate[addr]


def skewed_trace(lba: int, writes: int, seed: int = 0, static: float = 0.54,
                 hot_share: float = 0.5, ratio: float = 8.0) -> np.ndarray:
    """Synthetic skewed page trace with two temperature clusters.

    A ``static`` fraction of the address space is never updated; the remainder
    is split evenly into a cold and a hot cluster whose per-page rates differ
    by ``ratio``. Addresses are shuffled so clusters are not contiguous.
    """
    rng = make_rng(seed)
    active = lba - int(round(static * lba))
    n_hot = int(round(active * hot_share))
    n_cold = active - n_hot
    perm = rng.permutation(lba)
    cold, hot = perm[:n_cold], perm[n_cold:n_cold + n_hot]
    w_hot = n_hot * ratio
    p_hot = w_hot / (w_hot + n_cold)
    pick_hot = rng.random(writes) < p_hot
    out = np.where(pick_hot,
                   hot[rng.integers(0, max(1, n_hot), writes)],
                   cold[rng.integers(0, max(1, n_cold), writes)])
    return out.astype(np.int64)


class OracleDetector:
    """Classifies pages by their true update probability.

    ``truth`` exposes ``rate(addr)`` and a ``version`` that changes whenever
    the rates do. A manager with a fixed model of its rungs supplies their
    rates through ``assumed_rates()``. Otherwise each rung of the bound
    manager's ladder is represented by the mean true rate of the pages it
    currently holds; a rung without pages sits
    between its neighbours on a log scale, or ``rung_step`` beyond the end
    rung. One extra virtual rung above the top catches pages hotter than
    anything the manager holds. A page belongs to the rung whose reference is
    closest on a log scale and moves at most one rung per write: up on
    application writes, down on migrations.
    """

    def __init__(self, truth, floor: float = 1e-12):
        self.truth = truth
        self.floor = floor
        self._m = None
        self._sum: dict[int, float] = {}
        self._version = None
        self._key = None
        self._logs: list[float] = []

    def bind(self, manager) -> None:
        self._m = manager
        self._sum = {}
        self._version = getattr(self.truth, "version", 0)

    def track(self, addr: int, old, new) -> None:
        if self._version != getattr(self.truth, "version", 0):
            return  # sums are rebuilt before the next classification
        q = self.truth.rate(addr)
        s = self._sum
        if old is not None:
            s[old] = s.get(old, 0.0) - q
        s[new] = s.get(new, 0.0) + q

    def merge(self, src: int, dst: int) -> None:
        self._sum[dst] = self._sum.get(dst, 0.0) + self._sum.pop(src, 0.0)

    def drop(self, gid: int) -> None:
        self._sum.pop(gid, None)

    def record(self, gid, addr, size):
        pass

    def _rebuild(self) -> None:
        m = self._m
        B = m.B
        bgm = m.bgm
        rate = self.truth.rate
        sums: dict[int, float] = {}
        for addr, page in enumerate(m.mt.l2p):
            if page >= 0:
                g = bgm[page // B]
                sums[g] = sums.get(g, 0.0) + rate(addr)
        self._sum = sums
        self._version = getattr(self.truth, "version", 0)

    def reference_rates(self) -> list[float]:
        m = self._m
        assumed = getattr(m, "assumed_rates", None)
        if assumed is not None:
            return assumed()
        version = getattr(self.truth, "version", 0)
        if version != self._version or (m.intervals and m.intervals % 256 == 0
                                        and self._key and self._key[0] != m.intervals):
            self._rebuild()
        raw: list[float | None] = []
        for gid in m.ladder:
            size = m.groups[gid].size
            tot = self._sum.get(gid, 0.0)
            raw.append(tot / size if size > 0 and tot > 0 else None)
        step = m.rung_step
        known = [i for i, r in enumerate(raw) if r is not None]
        n = len(raw)
        if not known:
            base = 1.0 / m.lba
            return [base * step ** i for i in range(n + 1)]
        out = list(raw)
        for i in range(n):
            if out[i] is not None:
                continue
            lo = max((k for k in known if k < i), default=None)
            hi = min((k for k in known if k > i), default=None)
            if lo is not None and hi is not None:
                t = (i - lo) / (hi - lo)
                out[i] = raw[lo] ** (1 - t) * raw[hi] ** t
            elif lo is not None:
                out[i] = raw[lo] * step ** (i - lo)
            else:
                out[i] = raw[hi] / step ** (hi - i)
        out.append(out[-1] * step)
        return out

    def _log_refs(self) -> list[float]:
        m = self._m
        key = (m.intervals, m.ladder_version, getattr(self.truth, "version", 0))
        if key != self._key:
            self._logs = [math.log(max(r, self.floor)) for r in self.reference_rates()]
            self._key = key
        return self._logs

    def target_rung(self, addr: int) -> int:
        refs = self._log_refs()
        lq = math.log(max(self.truth.rate(addr), self.floor))
        best, best_d = 0, math.inf
        for j, r in enumerate(refs):
            d = abs(lq - r)
            if d < best_d:
                best, best_d = j, d
        return best

    def classify(self, gid: int, addr: int, is_gc: bool) -> int:
        i = self._m.pos[gid]
        j = self.target_rung(addr)
        if not is_gc and j > i:
            return PROMOTE
        if is_gc and j < i:
            return DEMOTE
        return STAY


def oracle_classify(detector: OracleDetector, addr: int) -> int:
    """Ladder position the oracle would place ``addr`` at right now."""
    return detector.target_rung(addr)
