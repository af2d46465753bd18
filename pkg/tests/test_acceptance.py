"""End-to-end acceptance checks, one per criterion, each printing PASS or FAIL."""

import dataclasses
import time

import pytest

from ftlsim.allocation import GroupStat, _mixed_raw, summarize_grid, total_wa
from ftlsim.sim import csv_text, preset_runs, run, run_grid_study
from ftlsim.wamodel import delta_at_equilibrium, delta_at_equilibrium_lambert, equilibrium_wa

from helpers import small_config, unimodal
from test_properties import _drive

@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_model_equivalence(report):
    t = time.perf_counter()
    worst = max(abs(delta_at_equilibrium(k / 100) - delta_at_equilibrium_lambert(k / 100))
                for k in range(1, 100))
    took = time.perf_counter() - t
    report(1, worst <= 1e-9 and took < 1.0, f"max |diff| {worst:.2e}, {took:.3f} s")


def test_criterion_2_equilibrium(report):
    errs = []
    for label, cfg in preset_runs("equilibrium"):
        wa = run(cfg).summary["steady_state_wa"]
        errs.append((label, wa, abs(wa / equilibrium_wa(cfg.ratio) - 1)))
    worst = max(e for _, _, e in errs)
    detail = ", ".join(f"{lb} {wa:.3f}" for lb, wa, _ in errs)
    report(2, worst < 0.05, f"max rel err {worst:.3%}; {detail}")


def test_criterion_3_allocation_quality(report):
    t = time.perf_counter()
    summary = summarize_grid(run_grid_study())
    took = time.perf_counter() - t
    mean = max(v[0] for v in summary.values())
    worst = max(v[1] for v in summary.values())
    report(3, mean < 1.0 and worst < 5.0 and took < 60,
           f"worst mean {mean:.3f}%, max {worst:.3f}%, {took:.1f} s")


@pytest.mark.parametrize("sizes,freqs", [((350, 350), (0.9, 0.1)),
                                          ((200, 500), (0.7, 0.3)),
                                          ((500, 200), (0.6, 0.4))])
def test_criterion_4_division_line(report, sizes, freqs):
    stats = [GroupStat(s, f) for s, f in zip(sizes, freqs)]
    lba, op = sum(sizes), 300
    n = 2000
    pts = [op * (k + 1) / (n + 1) for k in range(n)]
    vals = [total_wa(stats, [x, op - x]) for x in pts]
    mixed = total_wa(stats, _mixed_raw(stats, lba, op))
    gap = mixed / min(vals) - 1
    report(4, unimodal(vals) and gap <= 0.02, f"{sizes}/{freqs}: midpoint {gap:.3%} above minimum")


def test_criterion_5_frequency_swap(report):
    t = time.perf_counter()
    res = {label: run(cfg).summary["extra_migrations_per_pba"]
           for label, cfg in preset_runs("swap2")}
    took = time.perf_counter() - t
    wolf, fdp = res["swap2_wolf"], res["swap2_fdp"]
    ratio = fdp / wolf if wolf > 0 else float("inf")
    ok = wolf <= 0.15 and fdp >= 0.5 and ratio >= 10 and took < 60
    report(5, ok, f"wolf {wolf:.4f}, fdp {fdp:.4f}, ratio {ratio:.1f}, {took:.1f} s")


def test_criterion_6_pairwise_swaps(report):
    migs = {label: run(cfg).summary["migrations"] for label, cfg in preset_runs("swap5x5")}
    pairs = sorted({label.rsplit("_", 1)[0] for label in migs})
    worse = [p for p in pairs if migs[p + "_wolf"] > migs[p + "_fdp"]]
    ratios = [migs[p + "_fdp"] / migs[p + "_wolf"] for p in pairs]
    report(6, len(pairs) == 10 and not worse,
           f"fdp/wolf {min(ratios):.2f}..{max(ratios):.2f}, wolf worse on {worse or 'none'}")


def test_criterion_7_greedy_vs_lru(report):
    total = {"greedy": 0, "lru": 0}
    for seed in range(3):
        for label, cfg in preset_runs("greedy_vs_lru", seed=seed):
            total[label] += run(cfg).summary["reconvergence_migrations"]
    ratio = total["lru"] / total["greedy"]
    report(7, ratio >= 1.10, f"lru {total['lru']} vs greedy {total['greedy']}, ratio {ratio:.2f}")


@pytest.mark.parametrize("kind", ["baseline", "wolf", "fdp"])
def test_criterion_8_properties(report, kind):
    for seed, freqs in ((0, (0.1, 0.9)), (1, FIVE), (2, (1.0, 0.0))):
        sc = dict(kind=kind, freqs=freqs, ratio=0.75, oracle=seed % 2 == 0, policy="greedy",
                  seed=seed, writes=3000, swap_every=1000)
        m, probe = _drive(sc)
        m.check_invariants()
        assert m.mt.mapped == m.lba
        if probe is not None:
            assert probe.checked and not probe.bad_sum and not probe.bad_order
    cfg = small_config(manager=kind, workload="kmodal", freqs=(0.25, 0.75), seed=11)
    same = csv_text(run(dataclasses.replace(cfg)).windows) == csv_text(run(cfg).windows)
    report(8, same, f"{kind}: invariants hold, csv identical across runs")


FIVE = tuple(x / 31 for x in (1, 2, 4, 8, 16))


def test_criterion_9_skewed_trace(report):
    wa = {label: run(cfg).summary["steady_state_wa"]
          for label, cfg in preset_runs("trace_replay") if label != "trace_fdp"}
    measured, doubling = wa["trace_wolf"], wa["trace_wolf_doubling"]
    report(9, doubling >= 1.10 * measured,
           f"measured {measured:.3f}, doubling {doubling:.3f}, gap {doubling / measured - 1:.1%}")
