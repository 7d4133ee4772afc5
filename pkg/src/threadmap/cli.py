"""Command-line front end.

Exit status: 0 on success, 1 on runtime or parse errors, 2 on usage errors
(unknown scenario, policy or model included).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .engine import SimConfig, SimulationError
from .policies import parse_policy_list
from .procstat import ProcStatParseError, ProcStatStructureError, read_proc_stat
from .scenarios import (
    SCENARIO_NAMES,
    CalibrationError,
    comparison_csv,
    comparison_rows,
    load_scenario,
    load_trace_csv,
    report_csv,
    score,
    single_program_sweep,
    stock_scenario,
    sweep_csv,
)
from .workloads import load_models, stock_models

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# flag name -> default; config file values apply only where the flag was not given
_DEFAULTS = {
    "scenario": None,
    "policies": None,
    "threads": 16,
    "cores": 63,
    "seed": 0,
    "staleness": 0,
    "format": "csv",
    "out": None,
    "model": None,
    "models": None,
    "repeats": 1,
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threadmap", description="Thread-to-core mapping policy simulator."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--policies", default=argparse.SUPPRESS,
                       help="comma-separated subset of static,bll,xll,linux (default: all)")
        p.add_argument("--cores", type=int, default=argparse.SUPPRESS,
                       help="usable cores (default 63)")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--staleness", type=int, default=argparse.SUPPRESS,
                       help="jiffies by which load snapshots lag the clock")
        p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
        p.add_argument("--out", default=argparse.SUPPRESS,
                       help="output directory (default: print to stdout)")
        p.add_argument("--config", help="JSON file of defaults; explicit flags win")
        p.add_argument("--models", default=argparse.SUPPRESS,
                       help="JSON workload definitions replacing the stock set")

    run = sub.add_parser("run", help="score a multiprogramming scenario")
    run.add_argument("--scenario", default=argparse.SUPPRESS,
                     help=f"one of {', '.join(SCENARIO_NAMES)} or a scenario JSON file")
    run.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                     help="threads per sort in scenario3 (16 or 63)")
    run.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    common(run)

    sweep = sub.add_parser("sweep", help="speedup of one program over n = 1..cores")
    sweep.add_argument("--model", default=argparse.SUPPRESS)
    common(sweep)

    stat = sub.add_parser("parse-stat", help="print a /proc/stat file as JSON")
    stat.add_argument("path")
    return parser


def _settings(ns: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if getattr(ns, "config", None):
        try:
            cfg = json.loads(Path(ns.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        unknown = set(cfg) - set(_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(cfg)
    for key in _DEFAULTS:
        if hasattr(ns, key):
            settings[key] = getattr(ns, key)
    settings["policies_given"] = bool(settings["policies"])
    try:
        settings["policies"] = parse_policy_list(settings["policies"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return settings


def _sim_config(s: dict) -> SimConfig:
    try:
        return SimConfig(usable_cores=int(s["cores"]), rng_seed=int(s["seed"]),
                         snapshot_staleness=int(s["staleness"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _models(s: dict):
    return load_models(s["models"]) if s["models"] else stock_models()


def _emit(name: str, text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out) / name
    path.write_text(text)


def cmd_run(s: dict) -> int:
    name = s["scenario"]
    if not name:
        raise UsageError("--scenario is required")
    models = _models(s)
    if name in SCENARIO_NAMES:
        try:
            scenario = stock_scenario(name, int(s["threads"]), models)
        except ValueError as exc:
            if isinstance(exc, CalibrationError):
                raise
            raise UsageError(str(exc)) from None
        except KeyError as exc:
            raise UsageError(f"model {exc} missing from workload set") from None
        policies = s["policies"]
    elif Path(name).is_file():
        try:
            scenario = load_scenario(name, models)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad scenario file {name}: {exc}") from None
        policies = s["policies"] if s["policies_given"] else list(scenario.policies)
    else:
        raise UsageError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIO_NAMES)} or a file")

    config = _sim_config(s)
    reports = [score(scenario, p, config, int(s["repeats"])) for p in policies]
    out = s["out"]
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
    if s["format"] == "json":
        doc = {
            "scenario": scenario.name,
            "reports": [r.to_dict() for r in reports],
            "comparison": comparison_rows(reports),
        }
        _emit(f"{scenario.name}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n", out)
    elif out is None:
        sys.stdout.write(comparison_csv(reports))
    else:
        for r in reports:
            _emit(f"{scenario.name}_{r.policy}.csv", report_csv(r), out)
            _emit(f"{scenario.name}_{r.policy}_load.csv", load_trace_csv(r), out)
            _emit(f"{scenario.name}_{r.policy}_trace.jsonl", "".join(l + "\n" for l in r.trace), out)
        _emit(f"{scenario.name}_comparison.csv", comparison_csv(reports), out)
    return EXIT_OK


def cmd_sweep(s: dict) -> int:
    models = _models(s)
    name = s["model"]
    if not name:
        raise UsageError("--model is required")
    if name not in models:
        raise UsageError(f"unknown model {name!r}; known: {', '.join(sorted(models))}")
    config = _sim_config(s)
    rows = single_program_sweep(models[name], config.usable_cores, s["policies"], config)
    if s["format"] == "json":
        text = json.dumps(
            [{"n": r.n, "policy": r.policy, "turnaround": r.turnaround,
              "speedup": round(r.speedup, 4)} for r in rows],
            indent=2,
        ) + "\n"
        fname = f"sweep_{name}.json"
    else:
        text = sweep_csv(rows)
        fname = f"sweep_{name}.csv"
    if s["out"] is not None:
        Path(s["out"]).mkdir(parents=True, exist_ok=True)
    _emit(fname, text, s["out"])
    return EXIT_OK


def cmd_parse_stat(path: str) -> int:
    snap = read_proc_stat(path)
    doc = {
        "aggregate": _cpu_dict(snap.aggregate) if snap.aggregate else None,
        "cpus": [_cpu_dict(c) for c in snap.per_cpu],
    }
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _cpu_dict(c) -> dict:
    return {
        "cpu": c.cpu_index if c.cpu_index >= 0 else None,
        "user": c.user,
        "nice": c.nice,
        "system": c.system,
        "idle": c.idle,
        "remaining": list(c.remaining_fields),
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if ns.command == "parse-stat":
            return cmd_parse_stat(ns.path)
        settings = _settings(ns)
        if ns.command == "run":
            return cmd_run(settings)
        return cmd_sweep(settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"threadmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProcStatParseError, ProcStatStructureError, SimulationError,
            CalibrationError, OSError) as exc:
        print(f"threadmap: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
