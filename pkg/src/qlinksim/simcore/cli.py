"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 at least one trial timed out
(partial results are still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path

from ..tomography import TrialStats, aggregate
from .config import ConfigError, ExperimentConfig, parse_config
from .experiment import run_bootstrap, run_experiment
from .output import read_csv, trial_row, write_csv, write_outputs, write_trace
from .simulation import run_trial

EXIT_OK, EXIT_CONFIG, EXIT_TIMEOUT = 0, 2, 3

log = logging.getLogger("qlinksim")


def _load(args) -> ExperimentConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read {args.config}: {err.strerror}") from None
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed = {args.seed}")
    if getattr(args, "trials", None) is not None:
        overrides.append(f"trials = {args.trials}")
    if overrides:
        text += "\n[General]\n" + "\n".join(overrides) + "\n"
    return parse_config(text, args.section)


def _print_summary(label: str, summary: dict) -> None:
    if not summary.get("n"):
        print(f"{label}: no reconstruction available")
        return
    print(
        f"{label}: F_r={summary['mean']:.4f} sigma={summary['sigma']:.4f} "
        f"min={summary['min']:.4f} max={summary['max']:.4f} "
        f"|F_r-F_a|={summary['mean_abs_diff']:.4f} throughput={summary['throughput_mean']:.1f}/s "
        f"(n={summary['n']})"
    )


def cmd_run(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out)
    name = cfg.tomography_output_filename
    if args.trace:
        trace: list = []
        outputs = [run_trial(cfg, cfg.seed, trace=trace)]
        write_trace(trace, args.trace)
        if cfg.trials > 1:
            outputs += run_experiment(cfg.replace(seed=cfg.seed + 1), cfg.trials - 1, args.jobs).outputs
        from .experiment import summarize

        summary = summarize(outputs)
    else:
        res = run_experiment(cfg, None, args.jobs)
        outputs, summary = res.outputs, res.summary
    if len(outputs) == 1:
        write_outputs(outputs, out_dir / name)
    else:
        for i, o in enumerate(outputs):
            write_outputs([o], out_dir / f"{name}_trial{i:03d}")
    write_csv([trial_row(i, o, cfg) for i, o in enumerate(outputs)], out_dir / f"{name}_trials.csv")
    _print_summary(f"{cfg.architecture} {cfg.distance_km:g} km N_p={cfg.n_rounds}", summary)
    return EXIT_TIMEOUT if any(o.timed_out for o in outputs) else EXIT_OK


def _int_range(text: str) -> list:
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out)
    rows, timed_out = [], False
    lengths = [float(x) for x in args.lengths.split(",")] if args.lengths else [cfg.distance_km]
    for length in lengths:
        base = cfg.replace(distance_km=length)
        if args.bootstrap:
            rounds = run_bootstrap(base, max(_int_range(args.rounds)), None, args.jobs)
            results = [(r.n_rounds, r.result) for r in rounds]
        else:
            counts = _int_range(args.rounds) if args.rounds else [cfg.n_rounds]
            results = [(n, run_experiment(base.replace(initial_purification=n), None, args.jobs))
                       for n in counts]
        for n, res in results:
            c = base.replace(initial_purification=n)
            rows += [trial_row(i, o, c) for i, o in enumerate(res.outputs)]
            timed_out |= res.timed_out
            _print_summary(f"{c.architecture} {length:g} km N_p={n}", res.summary)
    write_csv(rows, out_dir / f"{cfg.tomography_output_filename}_sweep.csv")
    return EXIT_TIMEOUT if timed_out else EXIT_OK


def cmd_report(args) -> int:
    groups = defaultdict(list)
    for path in args.csv:
        for row in read_csv(path):
            key = (row["architecture"], row["distance_km"], row["n_rounds"], row["method"])
            groups[key].append(row)
    out_rows = []
    for key in sorted(groups):
        rows = groups[key]
        usable = [r for r in rows if r["fidelity_r"] == r["fidelity_r"]]
        if not usable:
            continue
        s = aggregate([TrialStats(r["fidelity_r"], r["fidelity_a"], r["bellpair_per_sec"])
                       for r in usable])
        arch, dist, n, method = key
        _print_summary(f"{arch} {dist:g} km N_p={n} {method}", s)
        out_rows.append({"architecture": arch, "distance_km": dist, "n_rounds": n,
                         "method": method, **s})
    if args.out and out_rows:
        import csv

        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(out_rows[0]))
            w.writeheader()
            w.writerows(out_rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlinksim", description="Quantum link bootstrapping simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file (defaults if omitted)")
        sp.add_argument("--section", help="only merge this [Config NAME] section")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable)")

    run = sub.add_parser("run", help="run trials of one configuration")
    common(run)
    run.add_argument("--trace", help="write an event-trace log of the first trial here")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="vary purification rounds and/or link lengths")
    common(sweep)
    sweep.add_argument("--rounds", help="e.g. 0:6 or 0,2,4")
    sweep.add_argument("--lengths", help="comma-separated total lengths in km")
    sweep.add_argument("--bootstrap", action="store_true",
                       help="stop adding rounds once mean fidelity declines")
    sweep.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate per-trial CSV files")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--out", help="write the aggregate table as CSV")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
