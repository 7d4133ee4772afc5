"""Multiprogramming scenarios, single-program sweeps and their scoring."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .engine import SimConfig, Simulator
from .policies import POLICY_NAMES
from .procstat import USER_HZ
from .workloads import WorkloadModel, load_models, model_from_dict, stock_models

SCENARIO_NAMES = ("scenario1", "scenario2", "scenario3")

# submission spacing of the three stock scenarios, in jiffies
HEALTH_INTERVAL = 600
SORT_INTERVAL = 100


class CalibrationError(ValueError):
    """Stock workload parameters do not produce the situation a scenario needs."""


@dataclass(frozen=True)
class Submission:
    model: WorkloadModel
    at: int


@dataclass(frozen=True)
class Scenario:
    name: str
    submissions: tuple[Submission, ...]
    policies: tuple[str, ...] = POLICY_NAMES

    def __post_init__(self):
        ticks = [s.at for s in self.submissions]
        if ticks != sorted(ticks):
            raise ValueError("submission ticks must be non-decreasing")
        if not self.submissions:
            raise ValueError("a scenario needs at least one submission")

    @property
    def thread_counts(self) -> list[int]:
        return [s.model.thread_count for s in self.submissions]

    @property
    def submit_ticks(self) -> list[int]:
        return [s.at for s in self.submissions]

    @property
    def spawn_ticks(self) -> list[int]:
        return [s.at + s.model.init_jiffies for s in self.submissions]


@dataclass(frozen=True)
class ProgramResult:
    program_id: int
    name: str
    threads: int
    submit_tick: int
    spawn_tick: int
    completion_tick: int
    turnaround: float


@dataclass
class ScenarioReport:
    scenario: str
    policy: str
    programs: list[ProgramResult]
    final_tick: int
    load_trace: list[tuple[int, int, int]] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    repeats: int = 1

    @property
    def turnarounds(self) -> list[float]:
        return [p.turnaround for p in self.programs]

    @property
    def mean_turnaround(self) -> float:
        return statistics.fmean(self.turnarounds)

    @property
    def max_turnaround(self) -> float:
        return max(self.turnarounds)

    @property
    def throughput(self) -> float:
        """Completed programs per second of simulated time."""
        first = min(p.submit_tick for p in self.programs)
        last = max(p.completion_tick for p in self.programs)
        return len(self.programs) / ((last - first) / USER_HZ)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "programs": len(self.programs),
            "final_tick": self.final_tick,
            "mean_turnaround_jiffies": round(self.mean_turnaround, 4),
            "max_turnaround_jiffies": round(self.max_turnaround, 4),
            "throughput_per_s": round(self.throughput, 4),
        }

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "results": [_program_row(p) for p in self.programs],
            "load_trace": [list(row) for row in self.load_trace],
        }


PROGRAM_COLUMNS = (
    "program", "name", "threads", "submit_tick", "spawn_tick",
    "completion_tick", "turnaround_jiffies", "turnaround_s",
)


def _num(x: float):
    """Jiffies as integers, anything fractional with 4 decimals."""
    if float(x).is_integer():
        return int(x)
    return round(float(x), 4)


def _program_row(p: ProgramResult) -> dict:
    return {
        "program": p.program_id,
        "name": p.name,
        "threads": p.threads,
        "submit_tick": p.submit_tick,
        "spawn_tick": p.spawn_tick,
        "completion_tick": p.completion_tick,
        "turnaround_jiffies": _num(p.turnaround),
        "turnaround_s": f"{p.turnaround / USER_HZ:.4f}",
    }


# -- stock scenarios ------------------------------------------------------


def _models(models: Optional[Mapping[str, WorkloadModel]]) -> Mapping[str, WorkloadModel]:
    return stock_models() if models is None else models


def scenario_one(models=None, check: bool = True) -> Scenario:
    """Two large and one small health run, 32 threads each, 6 s apart.

    With ``check`` the small run must finish before the second large one is
    submitted under every policy, otherwise :class:`CalibrationError`.
    """
    m = _models(models)
    large = m["health_large"].with_threads(32)
    small = m["health_small"].with_threads(32)
    scenario = Scenario(
        "scenario1",
        (
            Submission(large, 0),
            Submission(small, HEALTH_INTERVAL),
            Submission(large, 2 * HEALTH_INTERVAL),
        ),
    )
    if check:
        _check_small_health(large, small)
    return scenario


@lru_cache(maxsize=8)
def _check_small_health(large: WorkloadModel, small: WorkloadModel) -> None:
    deadline = 2 * HEALTH_INTERVAL
    for policy in POLICY_NAMES:
        sim = Simulator(SimConfig(policy=policy))
        sim.submit(large, 0)
        sim.submit(small, HEALTH_INTERVAL)
        while not sim.programs[1].done and sim.tick <= deadline:
            sim.step()
        done_at = sim.programs[1].completion_tick
        if done_at is None or done_at > deadline:
            raise CalibrationError(
                f"small health input does not finish by tick {deadline} under {policy}"
            )


def scenario_two(models=None) -> Scenario:
    """sort, health, strassen and nqueens submitted together at their thread caps."""
    m = _models(models)
    subs = (
        Submission(m["sort"].with_threads(16), 0),
        Submission(m["health_medium"].with_threads(32), 0),
        Submission(m["strassen"].with_threads(63), 0),
        Submission(m["nqueens"].with_threads(63), 0),
    )
    scenario = Scenario("scenario2", subs)
    if len(set(scenario.spawn_ticks)) != len(subs):
        raise CalibrationError("scenario2 needs distinct initialisation lengths")
    return scenario


def scenario_three(threads_per_sort: int = 16, models=None) -> Scenario:
    """Ten identical sorts arriving one second apart."""
    if threads_per_sort not in (16, 63):
        raise ValueError("threads_per_sort must be 16 or 63")
    sort = _models(models)["sort"].with_threads(threads_per_sort)
    subs = tuple(Submission(sort, i * SORT_INTERVAL) for i in range(10))
    return Scenario(f"scenario3-{threads_per_sort}", subs)


def stock_scenario(name: str, threads: int = 16, models=None) -> Scenario:
    if name == "scenario1":
        return scenario_one(models)
    if name == "scenario2":
        return scenario_two(models)
    if name == "scenario3":
        return scenario_three(threads, models)
    raise KeyError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIO_NAMES)}")


def load_scenario(source, models=None) -> Scenario:
    """Build a scenario from a JSON file or mapping.

    Schema::

        {"name": "...", "policies": ["bll", "xll"],
         "models": [ ...inline model definitions... ],
         "submissions": [{"model": "health_large", "at": 0, "threads": 32}]}

    ``model`` names resolve against inline models first, then the stock set.
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    known = dict(_models(models))
    if "models" in data:
        known.update(load_models(data["models"]))
    subs = []
    for entry in data["submissions"]:
        model = entry["model"]
        if isinstance(model, Mapping):
            model = model_from_dict(model)
        else:
            try:
                model = known[model]
            except KeyError:
                raise KeyError(f"unknown model {model!r}") from None
        if "threads" in entry:
            model = model.with_threads(int(entry["threads"]))
        subs.append(Submission(model, int(entry.get("at", 0))))
    policies = tuple(data.get("policies", POLICY_NAMES))
    for p in policies:
        if p not in POLICY_NAMES:
            raise ValueError(f"unknown policy {p!r}")
    return Scenario(data.get("name", "custom"), tuple(subs), policies)


def scenario_to_dict(scenario: Scenario) -> dict:
    from .workloads import model_to_dict

    return {
        "name": scenario.name,
        "policies": list(scenario.policies),
        "submissions": [
            {"model": model_to_dict(s.model), "at": s.at} for s in scenario.submissions
        ],
    }


# -- scoring --------------------------------------------------------------


def run_scenario(scenario: Scenario, policy: str, config: Optional[SimConfig] = None) -> Simulator:
    cfg = replace(config or SimConfig(), policy=policy)
    sim = Simulator(cfg)
    for sub in scenario.submissions:
        sim.submit(sub.model, sub.at)
    sim.run_until_idle()
    return sim


def score(
    scenario: Scenario,
    policy: str,
    config: Optional[SimConfig] = None,
    repeats: int = 1,
) -> ScenarioReport:
    """Run ``scenario`` under ``policy`` and collect turnaround times.

    The engine is deterministic, so one run suffices unless staleness
    jitter is configured; with ``repeats > 1`` run ``i`` uses seed
    ``rng_seed + i`` and turnarounds are averaged.
    """
    cfg = config or SimConfig()
    runs = []
    for i in range(max(1, repeats)):
        runs.append(run_scenario(scenario, policy, replace(cfg, rng_seed=cfg.rng_seed + i)))
    first = runs[0]
    programs = []
    for prog in first.programs:
        turnarounds = [r.programs[prog.program_id].turnaround for r in runs]
        programs.append(ProgramResult(
            prog.program_id,
            prog.model.name,
            prog.model.thread_count,
            prog.submit_tick,
            prog.spawn_tick,
            prog.completion_tick,
            statistics.fmean(turnarounds) if len(runs) > 1 else turnarounds[0],
        ))
    return ScenarioReport(
        scenario.name, policy, programs, first.tick,
        load_trace=first.load_trace, trace=first.trace_lines(), repeats=len(runs),
    )


def isolated_runtime(model: WorkloadModel, config: Optional[SimConfig] = None) -> int:
    """Turnaround of ``model`` alone on an idle machine (static mapping)."""
    cfg = replace(config or SimConfig(), policy="static")
    sim = Simulator(cfg)
    sim.submit(model, 0)
    return sim.run_until_idle()


@dataclass(frozen=True)
class SweepRow:
    n: int
    policy: str
    turnaround: int
    speedup: float


def single_program_sweep(
    model: WorkloadModel,
    max_threads: int = 63,
    policies: Sequence[str] = POLICY_NAMES,
    config: Optional[SimConfig] = None,
) -> list[SweepRow]:
    """Turnaround and speedup of ``model`` alone for ``n = 1..max_threads``."""
    cfg = config or SimConfig()
    rows = []
    for policy in policies:
        base = None
        for n in range(1, max_threads + 1):
            sim = Simulator(replace(cfg, policy=policy))
            sim.submit(model.with_threads(n), 0)
            t = sim.run_until_idle()
            if base is None:
                base = t
            rows.append(SweepRow(n, policy, t, base / t))
    return rows


def sweep_argmax(rows: Iterable[SweepRow], policy: str) -> int:
    best = None
    for row in rows:
        if row.policy == policy and (best is None or row.speedup > best.speedup):
            best = row
    return best.n


# -- serialisation --------------------------------------------------------


def report_csv(report: ScenarioReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=("policy",) + PROGRAM_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for p in report.programs:
        writer.writerow({"policy": report.policy, **_program_row(p)})
    return buf.getvalue()


def report_json(report: ScenarioReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def load_trace_csv(report: ScenarioReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("tick", "core", "user_jiffies"))
    writer.writerows(report.load_trace)
    return buf.getvalue()


def comparison_rows(reports: Sequence[ScenarioReport]) -> list[dict]:
    """One row per program with its turnaround under each policy."""
    rows = []
    for i, prog in enumerate(reports[0].programs):
        row = {"program": prog.program_id, "name": prog.name, "threads": prog.threads}
        for rep in reports:
            row[rep.policy] = _num(rep.programs[i].turnaround)
        rows.append(row)
    mean = {"program": "mean", "name": "", "threads": ""}
    for rep in reports:
        mean[rep.policy] = _num(round(rep.mean_turnaround, 4))
    rows.append(mean)
    return rows


def comparison_csv(reports: Sequence[ScenarioReport]) -> str:
    rows = comparison_rows(reports)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("n", "policy", "turnaround", "speedup"))
    for r in rows:
        writer.writerow((r.n, r.policy, r.turnaround, f"{r.speedup:.4f}"))
    return buf.getvalue()
