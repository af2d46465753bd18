"""Command line entry point: ``simulate --preset NAME | --config FILE``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .allocation import summarize_grid, write_grid_csv
from .sim import (PRESETS, ConfigError, apply_settings, emit_csv, load_config,
                  preset_runs, run, run_grid_study)

log = logging.getLogger("ftlsim")


def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _one(job):
    label, cfg = job
    res = run(cfg)
    return label, res.windows, res.summary


def _run_all(jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            # map keeps the submission order, so output does not depend on timing
            return list(ex.map(_one, jobs))
    return [_one(j) for j in jobs]


def _grid(out_dir: str) -> dict:
    rows = run_grid_study()
    write_grid_csv(rows, os.path.join(out_dir, "grid_study.csv"))
    summary = {}
    for (n, r, q), (mean, mx, count) in sorted(summarize_grid(rows).items()):
        summary[f"groups={n},ratio={r:g},q={q}"] = {"mean_pct": mean, "max_pct": mx, "configs": count}
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", metavar="FILE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. wolf.q=2 or warmup=5lba")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs within a preset")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    os.makedirs(args.out, exist_ok=True)
    try:
        sets = _parse_sets(args.set)
        if args.preset == "grid_study":
            summary = _grid(args.out)
        else:
            if args.preset:
                jobs = preset_runs(args.preset, args.seed)
            else:
                cfg = load_config(args.config)
                if args.seed is not None:
                    cfg.seed = args.seed
                jobs = [(os.path.splitext(os.path.basename(args.config))[0], cfg)]
            for _, cfg in jobs:
                apply_settings(cfg, sets)
                cfg.validate()
            summary = {}
            for label, windows, s in _run_all(jobs, args.jobs):
                emit_csv(windows, os.path.join(args.out, f"{label}.csv"))
                summary[label] = s
                log.info("%s: steady-state WA %.4f", label, s["steady_state_wa"])
    except ConfigError as e:
        print(f"simulate: config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"simulate: {e}", file=sys.stderr)
        return 1
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
