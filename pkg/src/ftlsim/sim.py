"""Experiment driver: configuration, presets, metric windows and CSV output.

A run fills every logical page once, runs a warm-up phase, then a measured
phase split into fixed-width windows. Each window becomes one CSV row.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
from dataclasses import dataclass, field

from .flash import FlashGeometry
from .managers import BaselineManager, FdpManager
from .wolf import WolfManager
from .workloads import (RNG_NAME, KModalSpec, KModalWorkload, OracleDetector, SwapSchedule,
                        TraceWorkload, skewed_trace)

CSV_HEADER = ["window", "logical_writes", "migrations", "erases", "wa", "group_count",
              "group_sizes", "group_freqs", "group_op_targets"]

MANAGERS = {"baseline": BaselineManager, "fdp": FdpManager, "wolf": WolfManager}
DEFAULT_POLICY = {"baseline": "greedy", "fdp": "lru", "wolf": "greedy"}
WORKLOADS = ("uniform", "kmodal", "skewed", "trace")


class ConfigError(ValueError):
    pass


@dataclass
class WolfParams:
    interval_fraction: float = 0.001
    a: float = 1.0 / 3.0
    q: float = 2.0
    w: int = 50
    f: int | None = None
    cold_threshold: float | None = 0.05
    cold_fraction: float = 0.05
    fp_rate: float = 0.3
    freq_source: str = "measured"
    max_groups: int = 16


@dataclass
class FdpParams:
    interval_fraction: float = 0.001
    f: int | None = None
    fp_rate: float = 0.3
    max_groups: int = 8


@dataclass
class SkewParams:
    static: float = 0.54
    hot_share: float = 0.5
    ratio: float = 8.0
    length: float = 40.0  # trace length in multiples of LBA


@dataclass
class RunConfig:
    geometry: FlashGeometry = field(default_factory=FlashGeometry.desk)
    ratio: float = 0.7
    manager: str = "baseline"
    policy: str | None = None
    workload: str = "uniform"
    freqs: tuple = ()
    sizes: tuple = ()
    swaps: tuple = ()  # (measured-phase write index, group x, group y)
    trace: str | None = None
    detector: str = "bloom"
    seed: int = 0
    warmup: int = 0
    measured: int = 0
    window: int = 1
    compare_noswap: bool = True
    wolf: WolfParams = field(default_factory=WolfParams)
    fdp: FdpParams = field(default_factory=FdpParams)
    skew: SkewParams = field(default_factory=SkewParams)

    @property
    def lba(self) -> int:
        return int(self.ratio * self.geometry.pba)

    def validate(self) -> "RunConfig":
        if not 0 < self.ratio < 1:
            raise ConfigError(f"ratio: {self.ratio} is outside (0, 1)")
        if self.manager not in MANAGERS:
            raise ConfigError(f"manager: unknown manager {self.manager!r}")
        if self.policy not in (None, "greedy", "lru"):
            raise ConfigError(f"policy: unknown cleaning policy {self.policy!r}")
        if self.workload not in WORKLOADS:
            raise ConfigError(f"workload: unknown workload {self.workload!r}")
        if self.detector not in ("bloom", "oracle"):
            raise ConfigError(f"detector: unknown detector {self.detector!r}")
        if self.window <= 0:
            raise ConfigError("window: must be positive")
        if self.warmup < 0 or self.measured < 0:
            raise ConfigError("warmup/measured: must be non-negative")
        if self.workload == "kmodal":
            if not self.freqs:
                raise ConfigError("freqs: kmodal workload needs group frequencies")
            if self.sizes and len(self.sizes) != len(self.freqs):
                raise ConfigError("sizes: must match freqs in length")
            if abs(sum(self.freqs) - 1.0) > 1e-6:
                raise ConfigError(f"freqs: sum to {sum(self.freqs)}, not 1")
        if self.workload == "trace" and not self.trace:
            raise ConfigError("trace: trace workload needs a file path")
        if self.lba <= 0:
            raise ConfigError("ratio: leaves no logical pages")
        return self

    def effective_policy(self) -> str:
        return self.policy or DEFAULT_POLICY[self.manager]


@dataclass
class MetricsWindow:
    window: int
    logical_writes: int
    migrations: int
    erases: int
    wa: float
    group_count: int
    group_sizes: list
    group_freqs: list
    group_op_targets: list

    def row(self) -> list[str]:
        return [str(self.window), str(self.logical_writes), str(self.migrations),
                str(self.erases), f"{self.wa:.6f}", str(self.group_count),
                ";".join(str(s) for s in self.group_sizes),
                ";".join(f"{f:.6f}" for f in self.group_freqs),
                ";".join(str(t) for t in self.group_op_targets)]


@dataclass
class RunResult:
    config: RunConfig
    windows: list[MetricsWindow]
    summary: dict


def build_workload(cfg: RunConfig, swaps_on: bool = True):
    lba = cfg.lba
    if cfg.workload == "uniform":
        spec = KModalSpec.equal(lba, [1.0], cfg.seed)
        return KModalWorkload(spec, lba=lba)
    if cfg.workload == "kmodal":
        if cfg.sizes:
            spec = KModalSpec.sized(lba, cfg.sizes, cfg.freqs, cfg.seed)
        else:
            spec = KModalSpec.equal(lba, cfg.freqs, cfg.seed)
        events = []
        if swaps_on:
            events = [(cfg.warmup + int(i), (int(x), int(y))) for i, x, y in cfg.swaps]
        return KModalWorkload(spec, SwapSchedule(events), lba=lba)
    if cfg.workload == "skewed":
        n = int(cfg.skew.length * lba)
        addrs = skewed_trace(lba, n, cfg.seed, cfg.skew.static, cfg.skew.hot_share, cfg.skew.ratio)
        return TraceWorkload(addrs, lba)
    return TraceWorkload.from_file(cfg.trace, lba)


def build_manager(cfg: RunConfig, workload):
    geo = cfg.geometry
    policy = cfg.effective_policy()
    det = OracleDetector(workload) if cfg.detector == "oracle" else None
    if cfg.manager == "baseline":
        return BaselineManager(geo, cfg.lba, policy)
    if cfg.manager == "fdp":
        return FdpManager(geo, cfg.lba, policy, detector=det, **dataclasses.asdict(cfg.fdp))
    return WolfManager(geo, cfg.lba, policy, detector=det, **dataclasses.asdict(cfg.wolf))


def _group_view(m):
    gids = list(m.ladder)
    sizes = [m.groups[g].size for g in gids]
    freqs = [m.groups[g].freq for g in gids]
    targets = [m.groups[g].target_op for g in gids]
    return sizes, freqs, targets


def _simulate(cfg: RunConfig, swaps_on: bool = True):
    wl = build_workload(cfg, swaps_on)
    m = build_manager(cfg, wl)
    for a in range(cfg.lba):
        m.write(a)
    nxt = wl.next
    write = m.write
    for _ in range(cfg.warmup):
        write(nxt())
    c = m.dev.counters
    start = c.snapshot()
    windows = []
    n_win = cfg.measured // cfg.window
    for k in range(n_win):
        l0, m0, e0 = c.snapshot()
        for _ in range(cfg.window):
            write(nxt())
        l1, m1, e1 = c.snapshot()
        lw, mg = l1 - l0, m1 - m0
        sizes, freqs, targets = _group_view(m)
        windows.append(MetricsWindow(k, lw, mg, e1 - e0, (lw + mg) / lw, len(sizes),
                                     sizes, freqs, targets))
    end = c.snapshot()
    return m, windows, start, end


def steady_state_wa(windows) -> float:
    if not windows:
        return float("nan")
    tail = windows[len(windows) - max(1, len(windows) // 5):]
    return sum(w.wa for w in tail) / len(tail)


def reconvergence_migrations(windows, width: int, at: int, tol: float = 1.1,
                             lookback: int = 8) -> int:
    """Migrations from write index ``at`` until the first window whose WA is back
    within ``tol`` of the mean over the ``lookback`` windows before ``at``."""
    before = [w for w in windows if (w.window + 1) * width <= at][-lookback:]
    if not before:
        return sum(w.migrations for w in windows if w.window * width >= at)
    base = sum(w.wa for w in before) / len(before)
    total = 0
    for w in windows:
        if w.window * width < at:
            continue
        if w.wa <= tol * base:
            break
        total += w.migrations
    return total


def run(cfg: RunConfig) -> RunResult:
    cfg.validate()
    m, windows, start, end = _simulate(cfg)
    lw = end[0] - start[0]
    mg = end[1] - start[1]
    c = m.dev.counters
    summary = {
        "manager": cfg.manager,
        "policy": cfg.effective_policy(),
        "detector": cfg.detector,
        "seed": cfg.seed,
        "rng": RNG_NAME,
        "lba": cfg.lba,
        "pba": cfg.geometry.pba,
        "logical_writes": lw,
        "migrations": mg,
        "erases": end[2] - start[2],
        "physical_writes": lw + mg,
        "total_logical_writes": c.logical_writes,
        "total_migrations": c.migrations,
        "total_erases": c.erases,
        "steady_state_wa": steady_state_wa(windows),
        "final_groups": len(m.ladder),
    }
    if cfg.swaps and cfg.compare_noswap and cfg.workload == "kmodal":
        _, _, s0, e0 = _simulate(cfg, swaps_on=False)
        base = e0[1] - s0[1]
        summary["noswap_migrations"] = base
        summary["extra_migrations_per_pba"] = (mg - base) / cfg.geometry.pba
    if cfg.swaps:
        last = max(s[0] for s in cfg.swaps)
        summary["post_swap_migrations"] = sum(
            w.migrations for w in windows if w.window * cfg.window >= last)
        summary["reconvergence_migrations"] = reconvergence_migrations(windows, cfg.window, last)
    return RunResult(cfg, windows, summary)


def emit_csv(rows, path_or_buf) -> None:
    """Write metric windows as CSV; ``path_or_buf`` may be a path or a text buffer."""
    if hasattr(path_or_buf, "write"):
        _emit(rows, path_or_buf)
        return
    with open(path_or_buf, "w", newline="", encoding="utf-8") as fh:
        _emit(rows, fh)


def _emit(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.row())


def csv_text(rows) -> str:
    buf = io.StringIO()
    emit_csv(rows, buf)
    return buf.getvalue()


# --- presets -----------------------------------------------------------------

PRESETS = ("equilibrium", "swap2", "swap5x5", "greedy_vs_lru", "grid_study", "trace_replay")

# writes per interval at desk scale; see the README on time scaling
DESK_INTERVAL = 0.02

FIVE_EXP = tuple(x / 99.2 for x in (3.2, 6.4, 12.8, 25.6, 51.2))


def preset(name: str, seed: int | None = None) -> RunConfig:
    """Named experiment scaled to the desk geometry."""
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    cfg = RunConfig()
    lba = cfg.lba
    cfg.wolf.interval_fraction = DESK_INTERVAL
    cfg.fdp.interval_fraction = DESK_INTERVAL
    if name == "equilibrium":
        cfg.manager = "baseline"
        cfg.policy = "lru"
        cfg.warmup = 15 * lba
        cfg.measured = 10 * lba
        cfg.window = lba // 4
    elif name == "swap2":
        cfg.manager = "wolf"
        cfg.workload = "kmodal"
        cfg.freqs = (0.1, 0.9)
        cfg.detector = "oracle"
        cfg.warmup = 8 * lba
        cfg.measured = 10 * lba
        cfg.window = lba // 4
        cfg.swaps = ((2 * lba, 0, 1),)
    elif name == "swap5x5":
        cfg.manager = "wolf"
        cfg.workload = "kmodal"
        cfg.freqs = FIVE_EXP
        cfg.detector = "oracle"
        cfg.warmup = 8 * lba
        cfg.measured = 10 * lba
        cfg.window = lba // 4
        cfg.swaps = ((2 * lba, 0, 4),)
        cfg.compare_noswap = False
    elif name == "greedy_vs_lru":
        cfg.manager = "wolf"
        cfg.workload = "kmodal"
        cfg.freqs = (1.0, 0.0)
        cfg.detector = "oracle"
        cfg.warmup = 8 * lba
        cfg.window = lba // 16
        cfg.measured = 80 * cfg.window
        cfg.swaps = ((16 * cfg.window, 0, 1), (64 * cfg.window, 0, 1))
        cfg.compare_noswap = False
    elif name == "trace_replay":
        cfg.manager = "wolf"
        cfg.workload = "skewed"
        cfg.detector = "oracle"
        cfg.warmup = 20 * lba
        cfg.measured = 10 * lba
        cfg.window = lba // 4
    elif name == "grid_study":
        # allocation-only study; see run_grid_study
        cfg.manager = "wolf"
    if seed is not None:
        cfg.seed = seed
    return cfg


def swap5x5_runs(cfg: RunConfig):
    """One (label, config) per unordered group pair and manager."""
    out = []
    for x in range(5):
        for y in range(x + 1, 5):
            for mgr in ("wolf", "fdp"):
                c = dataclasses.replace(cfg, manager=mgr, policy=None,
                                        swaps=((cfg.swaps[0][0], x, y),))
                out.append((f"swap_{x}{y}_{mgr}", c))
    return out


def preset_runs(name: str, seed: int | None = None):
    """All simulation runs that make up a preset, as (label, config) pairs."""
    cfg = preset(name, seed)
    if name == "swap2":
        return [("swap2_wolf", cfg),
                ("swap2_fdp", dataclasses.replace(cfg, manager="fdp", policy=None))]
    if name == "swap5x5":
        return swap5x5_runs(cfg)
    if name == "greedy_vs_lru":
        return [("greedy", dataclasses.replace(cfg, policy="greedy")),
                ("lru", dataclasses.replace(cfg, policy="lru"))]
    if name == "equilibrium":
        out = []
        for r in (0.6, 0.7, 0.8, 0.9):
            c = dataclasses.replace(cfg, ratio=r)
            lba = c.lba
            c.warmup, c.measured, c.window = 15 * lba, 10 * lba, lba // 4
            out.append((f"equilibrium_r{r:g}", c))
        return out
    if name == "trace_replay":
        return [("trace_wolf", cfg),
                ("trace_wolf_doubling",
                 dataclasses.replace(cfg, wolf=dataclasses.replace(cfg.wolf, freq_source="doubling"))),
                ("trace_fdp", dataclasses.replace(cfg, manager="fdp", policy=None))]
    return [(name, cfg)]


def run_grid_study(q: int = 10, ratio: float = 0.7, group_counts=(2, 3, 4, 5)):
    from .allocation import grid_study
    return grid_study(q, group_counts, [ratio])


# --- configuration files ------------------------------------------------------

_SECTIONS = {"wolf": WolfParams, "fdp": FdpParams, "skew": SkewParams}
_GEOMETRY_KEYS = {f.name for f in dataclasses.fields(FlashGeometry)}


def _parse_scalar(key: str, text: str, kind, lba: int | None = None):
    t = text.strip()
    try:
        if kind is bool:
            low = t.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(t)
        if t.lower() in ("none", "") and kind is not str:
            return None
        if kind is int:
            if lba is not None and t.lower().endswith("lba"):
                return int(round(float(t[:-3] or 1) * lba))
            return int(t)
        if kind is float:
            return float(t)
        return t
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None


def _kind(annotation: str):
    a = str(annotation)
    if a.startswith("int"):
        return int
    if a.startswith("float"):
        return float
    if a.startswith("bool"):
        return bool
    return str


def _tuple(key: str, text: str, kind):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    return tuple(_parse_scalar(key, p, kind) for p in parts)


def apply_settings(cfg: RunConfig, settings: dict) -> RunConfig:
    """Apply dotted ``key -> text`` settings (``wolf.q``, ``geometry.luns_per_channel``, ...)."""
    geo = {}
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    deferred = []
    for key, text in settings.items():
        key = key.strip().lower()
        if key.startswith("run."):
            key = key[4:]
        if "." in key:
            sec, name = key.split(".", 1)
            if sec == "geometry":
                if name not in _GEOMETRY_KEYS:
                    raise ConfigError(f"{key}: unknown geometry field")
                geo[name] = _parse_scalar(key, text, int)
                continue
            if sec not in _SECTIONS:
                raise ConfigError(f"{key}: unknown section {sec!r}")
            sub = getattr(cfg, sec)
            sf = {f.name: f for f in dataclasses.fields(sub)}
            if name not in sf:
                raise ConfigError(f"{key}: unknown field")
            setattr(cfg, sec, dataclasses.replace(sub, **{name: _parse_scalar(key, text, _kind(sf[name].type))}))
            continue
        if key not in fields or key in _SECTIONS or key == "geometry":
            raise ConfigError(f"{key}: unknown field")
        deferred.append((key, text))
    if geo:
        try:
            cfg.geometry = dataclasses.replace(cfg.geometry, **geo)
        except ValueError as e:
            raise ConfigError(f"geometry: {e}") from None
    # write counts may be given as multiples of LBA, so the ratio goes first
    deferred.sort(key=lambda kv: kv[0] != "ratio")
    for key, text in deferred:
        if key in ("freqs", "sizes"):
            val = _tuple(key, text, float)
        elif key == "swaps":
            trip = _tuple(key, text, str)
            if len(trip) % 3:
                raise ConfigError("swaps: expected index,x,y triples")
            val = tuple((_parse_scalar(key, trip[i], int, cfg.lba), int(trip[i + 1]), int(trip[i + 2]))
                        for i in range(0, len(trip), 3))
        else:
            kind = _kind(fields[key].type)
            val = _parse_scalar(key, text, kind, cfg.lba)
        setattr(cfg, key, val)
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read a ``key = value`` file with section headers into a :class:`RunConfig`.

    Keys in a ``[run]`` section (or before any header) are top-level fields; a
    ``preset`` key there starts from that preset.
    """
    cp = configparser.ConfigParser(default_section="__defaults__", interpolation=None)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    flat = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            flat[k if sec == "run" else f"{sec}.{k}"] = v
    if "preset" in flat:
        name = flat.pop("preset").strip()
        base = preset(name)
    cfg = base or RunConfig()
    return apply_settings(cfg, flat)
