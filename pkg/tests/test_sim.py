import csv
import dataclasses
import io
import json

import pytest

from ftlsim import cli
from ftlsim.sim import (CSV_HEADER, DESK_INTERVAL, PRESETS, ConfigError, MetricsWindow, RunConfig,
                        apply_settings, csv_text, emit_csv, load_config, preset, preset_runs,
                        reconvergence_migrations, run, steady_state_wa, swap5x5_runs)

from helpers import small_config


def test_empty_run_is_header_only(tmp_path):
    assert csv_text([]) == ",".join(CSV_HEADER) + "\n"
    path = tmp_path / "e.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


@pytest.mark.parametrize("manager", ["baseline", "wolf", "fdp"])
def test_run_rows_and_conservation(manager):
    cfg = small_config(manager=manager, workload="kmodal", freqs=(0.2, 0.8))
    res = run(cfg)
    assert len(res.windows) == cfg.measured // cfg.window
    assert all(w.wa >= 1.0 for w in res.windows)
    s = res.summary
    assert s["physical_writes"] == s["logical_writes"] + s["migrations"]
    assert s["logical_writes"] == cfg.measured - cfg.measured % cfg.window
    B = cfg.geometry.pages_per_block
    total_phys = s["total_logical_writes"] + s["total_migrations"]
    assert s["total_erases"] * B >= total_phys - cfg.geometry.pba
    rows = list(csv.reader(io.StringIO(csv_text(res.windows))))
    assert rows[0] == CSV_HEADER and len(rows) == len(res.windows) + 1
    assert int(rows[1][5]) == len(rows[1][6].split(";"))


def test_determinism_byte_identical():
    cfg = small_config(manager="wolf", workload="kmodal", freqs=(0.1, 0.9), detector="oracle")
    a = csv_text(run(dataclasses.replace(cfg)).windows)
    b = csv_text(run(dataclasses.replace(cfg)).windows)
    c = csv_text(run(dataclasses.replace(cfg, seed=1)).windows)
    assert a == b and a != c


def test_swap_summary_fields():
    lba = small_config().lba
    cfg = small_config(manager="wolf", workload="kmodal", freqs=(0.1, 0.9), detector="oracle",
                       swaps=((lba, 0, 1),))
    s = run(cfg).summary
    assert {"noswap_migrations", "extra_migrations_per_pba", "post_swap_migrations",
            "reconvergence_migrations"} <= set(s)
    assert s["reconvergence_migrations"] <= s["post_swap_migrations"]


def _win(i, wa, mig):
    return MetricsWindow(i, 100, mig, 1, wa, 1, [1], [1.0], [1])


def test_reconvergence_metric():
    ws = [_win(i, 1.5, 50) for i in range(8)]
    ws += [_win(8, 3.0, 200), _win(9, 2.0, 100), _win(10, 1.6, 60), _win(11, 1.5, 50)]
    # back within 10% of 1.5 at window 10
    assert reconvergence_migrations(ws, 100, 800) == 300
    assert reconvergence_migrations(ws, 100, 0) == sum(w.migrations for w in ws)
    assert steady_state_wa(ws) == pytest.approx((1.6 + 1.5) / 2)
    assert steady_state_wa([]) != steady_state_wa([])


def test_validate_names_the_field():
    for field, value in (("ratio", 1.2), ("manager", "x"), ("policy", "fifo"),
                         ("workload", "zipf"), ("detector", "magic"), ("window", 0)):
        cfg = dataclasses.replace(RunConfig(), **{field: value})
        with pytest.raises(ConfigError, match=field):
            cfg.validate()
    with pytest.raises(ConfigError, match="freqs"):
        RunConfig(workload="kmodal").validate()
    with pytest.raises(ConfigError, match="freqs"):
        RunConfig(workload="kmodal", freqs=(0.5, 0.6)).validate()
    with pytest.raises(ConfigError, match="trace"):
        RunConfig(workload="trace").validate()


def test_apply_settings():
    cfg = apply_settings(RunConfig(), {"wolf.q": "3", "warmup": "2lba", "ratio": "0.8",
                                       "geometry.blocks_per_lun": "128", "freqs": "0.5;0.5",
                                       "swaps": "1lba,0,1", "wolf.cold_threshold": "none"})
    assert cfg.wolf.q == 3.0 and cfg.ratio == 0.8
    assert cfg.geometry.blocks_per_lun == 128
    assert cfg.warmup == 2 * cfg.lba
    assert cfg.freqs == (0.5, 0.5) and cfg.swaps == ((cfg.lba, 0, 1),)
    assert cfg.wolf.cold_threshold is None
    for bad in ({"wolf.qq": "1"}, {"nosuch": "1"}, {"disk.x": "1"}, {"geometry.size": "1"},
                {"window": "many"}, {"swaps": "1,2"}):
        key = next(iter(bad)).split(".")[0]
        with pytest.raises(ConfigError, match=key):
            apply_settings(RunConfig(), bad)
    with pytest.raises(ConfigError, match="geometry"):
        apply_settings(RunConfig(), {"geometry.channels": "0"})


def test_load_config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("manager = wolf\nworkload = kmodal\nfreqs = 0.1, 0.9\nmeasured = 3lba\n"
                    "[wolf]\nq = 4\n[fdp]\nmax_groups = 4\n")
    cfg = load_config(path)
    assert cfg.manager == "wolf" and cfg.wolf.q == 4.0 and cfg.fdp.max_groups == 4
    assert cfg.measured == 3 * cfg.lba
    path.write_text("[run]\npreset = swap2\nseed = 7\n")
    cfg = load_config(path)
    assert cfg.seed == 7 and cfg.freqs == (0.1, 0.9)
    path.write_text("[run\nbroken")
    with pytest.raises(ConfigError):
        load_config(path)


def test_presets():
    assert set(PRESETS) == {"equilibrium", "swap2", "swap5x5", "greedy_vs_lru", "grid_study",
                            "trace_replay"}
    s2 = preset("swap2")
    assert s2.freqs == (0.1, 0.9) and len(s2.swaps) == 1
    assert s2.wolf.interval_fraction == DESK_INTERVAL
    assert preset("greedy_vs_lru").freqs == (1.0, 0.0)
    assert len(preset("greedy_vs_lru").swaps) == 2
    runs = swap5x5_runs(preset("swap5x5"))
    assert len(runs) == 20 and len({c.swaps for _, c in runs}) == 10
    assert [label for label, _ in preset_runs("equilibrium")] == [
        "equilibrium_r0.6", "equilibrium_r0.7", "equilibrium_r0.8", "equilibrium_r0.9"]
    assert preset("swap2", seed=9).seed == 9
    with pytest.raises(ConfigError, match="preset"):
        preset("nope")


def test_cli_config_run(tmp_path):
    conf = tmp_path / "tiny.ini"
    conf.write_text("manager = fdp\nworkload = kmodal\nfreqs = 0.3, 0.7\n"
                    "warmup = 1lba\nmeasured = 1lba\nwindow = 500\n"
                    "[geometry]\nblocks_per_lun = 64\npages_per_block = 16\n")
    out = tmp_path / "out"
    assert cli.main(["--config", str(conf), "--out", str(out), "--seed", "3"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["tiny"]["seed"] == 3 and summary["tiny"]["manager"] == "fdp"
    lines = (out / "tiny.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 1 + summary["tiny"]["lba"] // 500


def test_cli_errors(tmp_path, capsys):
    conf = tmp_path / "bad.ini"
    conf.write_text("[wolf]\nqq = 3\n")
    assert cli.main(["--config", str(conf), "--out", str(tmp_path)]) == 2
    assert "wolf.qq" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 1
    assert cli.main(["--preset", "swap2", "--set", "noequals", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        cli.main(["--preset", "swap2", "--config", str(conf)])


def test_cli_grid_study(tmp_path):
    assert cli.main(["--preset", "grid_study", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary) == {f"groups={n},ratio=0.7,q=10" for n in (2, 3, 4, 5)}
    assert (tmp_path / "grid_study.csv").read_text().startswith("groups,ratio,Q,")
