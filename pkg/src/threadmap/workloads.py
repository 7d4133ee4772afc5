"""Parametric models of the benchmark programs.

A program is a serial initialisation phase followed by one parallel region.
The region's single-threaded length is ``total_work`` jiffies; running it
with ``n`` threads costs ``total_work / S(n)`` jiffies per thread, where
``S`` is the program's speedup curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

CURVE_KINDS = ("linear", "amdahl", "saturating")

SPEEDUP_FLOOR = 0.05


@dataclass(frozen=True)
class SpeedupCurve:
    kind: str = "linear"
    parallel_fraction: float = 1.0
    saturation_threads: Optional[int] = None
    post_peak_slope: float = 0.0

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if not 0.0 < self.parallel_fraction <= 1.0:
            raise ValueError("parallel_fraction must lie in (0, 1]")
        if self.kind == "saturating":
            if self.saturation_threads is None or self.saturation_threads < 1:
                raise ValueError("saturating curve needs saturation_threads >= 1")
            if self.post_peak_slope > 0:
                raise ValueError("post_peak_slope must be non-positive")


def _amdahl(p: float, n: int) -> float:
    return 1.0 / ((1.0 - p) + p / n)


def speedup(curve: SpeedupCurve, n: int) -> float:
    """Speedup of ``n`` threads over one thread.

    The saturating curve rises like Amdahl's law up to
    ``saturation_threads`` and then changes by ``post_peak_slope`` per extra
    thread, never dropping below :data:`SPEEDUP_FLOOR`.
    """
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if curve.kind == "linear":
        return float(n)
    if curve.kind == "amdahl":
        return _amdahl(curve.parallel_fraction, n)
    peak = curve.saturation_threads
    if n <= peak:
        return _amdahl(curve.parallel_fraction, n)
    value = _amdahl(curve.parallel_fraction, peak) + curve.post_peak_slope * (n - peak)
    return max(value, SPEEDUP_FLOOR)


@dataclass(frozen=True)
class WorkloadModel:
    name: str
    total_work: float
    curve: SpeedupCurve = field(default_factory=SpeedupCurve)
    init_jiffies: int = 0
    thread_count: int = 1
    # threads sleep this long after being mapped before they start working
    start_delay: int = 0

    def __post_init__(self):
        if self.init_jiffies < 0:
            raise ValueError("init_jiffies must be >= 0")
        if not self.total_work > 0:
            raise ValueError("total_work must be > 0")
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")
        if self.start_delay < 0:
            raise ValueError("start_delay must be >= 0")

    def with_threads(self, n: int) -> "WorkloadModel":
        return replace(self, thread_count=n)

    def scaled(self, factor: float, name: Optional[str] = None) -> "WorkloadModel":
        return replace(self, total_work=self.total_work * factor, name=name or self.name)


def per_thread_work(model: WorkloadModel) -> float:
    """Jiffies each thread must execute: ``total_work / S(thread_count)``."""
    return model.total_work / speedup(model.curve, model.thread_count)


def program_work_units(model: WorkloadModel) -> int:
    """Total thread-jiffies the engine schedules for one program, rounded to whole jiffies."""
    return max(1, round(model.thread_count * per_thread_work(model)))


def curve_from_dict(d: Mapping) -> SpeedupCurve:
    return SpeedupCurve(
        kind=d.get("kind", "linear"),
        parallel_fraction=float(d.get("parallel_fraction", 1.0)),
        saturation_threads=d.get("saturation_threads"),
        post_peak_slope=float(d.get("post_peak_slope", 0.0)),
    )


def model_from_dict(d: Mapping) -> WorkloadModel:
    return WorkloadModel(
        name=d["name"],
        total_work=float(d["total_work"]),
        curve=curve_from_dict(d.get("curve", {})),
        init_jiffies=int(d.get("init_jiffies", 0)),
        thread_count=int(d.get("threads", d.get("thread_count", 1))),
        start_delay=int(d.get("start_delay", 0)),
    )


def model_to_dict(model: WorkloadModel) -> dict:
    curve = {"kind": model.curve.kind, "parallel_fraction": model.curve.parallel_fraction}
    if model.curve.kind == "saturating":
        curve["saturation_threads"] = model.curve.saturation_threads
        curve["post_peak_slope"] = model.curve.post_peak_slope
    return {
        "name": model.name,
        "total_work": model.total_work,
        "curve": curve,
        "init_jiffies": model.init_jiffies,
        "threads": model.thread_count,
        "start_delay": model.start_delay,
    }


def load_models(source) -> dict[str, WorkloadModel]:
    """Read workload definitions from a JSON file path or an already-parsed mapping.

    Accepted layouts are ``{"models": [...]}`` or a bare list of model
    objects. Each model may carry ``"variants": {"small": 0.25, ...}``,
    which adds ``<name>_<variant>`` models with scaled ``total_work``.
    """
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    entries = data["models"] if isinstance(data, Mapping) else data
    models = {}
    for entry in entries:
        model = model_from_dict(entry)
        models[model.name] = model
        for variant, factor in entry.get("variants", {}).items():
            name = f"{model.name}_{variant}"
            models[name] = model.scaled(float(factor), name)
    return models


def stock_models() -> dict[str, WorkloadModel]:
    """Calibrated models of nqueens, strassen, sort and health.

    ``health`` is the medium input; ``health_small``, ``health_medium`` and
    ``health_large`` are the three input sizes.
    """
    text = resources.files("threadmap.data").joinpath("workloads.json").read_text()
    return load_models(json.loads(text))


def best_thread_count(curve: SpeedupCurve, max_threads: int = 63) -> int:
    """The smallest ``n`` in ``1..max_threads`` maximising ``speedup``."""
    best, best_s = 1, -math.inf
    for n in range(1, max_threads + 1):
        s = speedup(curve, n)
        if s > best_s:
            best, best_s = n, s
    return best
