"""Parsing of ``/proc/stat`` text images into per-core jiffy counters."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

USER_HZ = 100
JIFFY_MS = 1000 // USER_HZ

__all__ = [
    "USER_HZ",
    "JIFFY_MS",
    "CpuJiffies",
    "ProcStatSnapshot",
    "ProcStatParseError",
    "ProcStatStructureError",
    "parse_proc_stat",
    "read_proc_stat",
    "format_proc_stat",
    "user_load",
]


class ProcStatParseError(ValueError):
    """A ``cpu`` line could not be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ProcStatStructureError(ValueError):
    """The snapshot as a whole is inconsistent (duplicate or missing cpus)."""


@dataclass(frozen=True)
class CpuJiffies:
    cpu_index: int
    user: int
    nice: int
    system: int
    idle: int
    remaining_fields: tuple[int, ...] = ()

    def fields(self) -> tuple[int, ...]:
        return (self.user, self.nice, self.system, self.idle) + self.remaining_fields


@dataclass(frozen=True)
class ProcStatSnapshot:
    """Per-cpu counters of one ``/proc/stat`` image.

    ``aggregate`` holds the bare ``cpu`` line when present. ``capture_tick``
    is the jiffy at which the image was taken (0 for files read from disk).
    """

    per_cpu: tuple[CpuJiffies, ...]
    aggregate: Optional[CpuJiffies] = None
    capture_tick: int = 0
    _by_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.per_cpu:
            raise ProcStatStructureError("no cpu lines")
        ordered = tuple(sorted(self.per_cpu, key=lambda c: c.cpu_index))
        by_index = {}
        for cpu in ordered:
            if cpu.cpu_index in by_index:
                raise ProcStatStructureError(f"duplicate cpu index {cpu.cpu_index}")
            by_index[cpu.cpu_index] = cpu
        object.__setattr__(self, "per_cpu", ordered)
        object.__setattr__(self, "_by_index", by_index)

    def __getitem__(self, cpu_index: int) -> CpuJiffies:
        try:
            return self._by_index[cpu_index]
        except KeyError:
            raise KeyError(f"cpu{cpu_index} not present in snapshot") from None

    def __contains__(self, cpu_index: int) -> bool:
        return cpu_index in self._by_index


def _parse_counters(tokens: Sequence[str], lineno: int) -> list[int]:
    if len(tokens) < 4:
        raise ProcStatParseError(lineno, f"expected at least 4 counters, got {len(tokens)}")
    values = []
    for tok in tokens:
        if not tok.isdigit():
            raise ProcStatParseError(lineno, f"non-integer counter {tok!r}")
        values.append(int(tok))
    return values


def parse_proc_stat(text: str, capture_tick: int = 0) -> ProcStatSnapshot:
    """Parse a ``/proc/stat`` text image.

    Only ``cpu`` and ``cpuN`` lines are interpreted; every other line
    (``intr``, ``ctxt``, ``btime``, ...) is skipped. Counters beyond the
    fourth are kept verbatim in ``remaining_fields``.
    """
    aggregate = None
    per_cpu = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens or not tokens[0].startswith("cpu"):
            continue
        label = tokens[0]
        suffix = label[3:]
        if suffix and not suffix.isdigit():
            # e.g. a hypothetical "cpufreq" key; not a counter line
            continue
        values = _parse_counters(tokens[1:], lineno)
        if not suffix:
            if aggregate is not None:
                raise ProcStatStructureError(f"line {lineno}: duplicate aggregate cpu line")
            aggregate = CpuJiffies(-1, *values[:4], tuple(values[4:]))
            continue
        index = int(suffix)
        if index in seen:
            raise ProcStatStructureError(f"line {lineno}: duplicate cpu index {index}")
        seen.add(index)
        per_cpu.append(CpuJiffies(index, *values[:4], tuple(values[4:])))
    if not per_cpu:
        raise ProcStatStructureError("no cpu lines")
    return ProcStatSnapshot(tuple(per_cpu), aggregate, capture_tick)


def read_proc_stat(source: Union[str, os.PathLike] = "/proc/stat") -> ProcStatSnapshot:
    with open(source, encoding="ascii") as fh:
        return parse_proc_stat(fh.read())


def _format_line(label: str, cpu: CpuJiffies) -> str:
    return " ".join([label, *map(str, cpu.fields())])


def format_proc_stat(snapshot: ProcStatSnapshot) -> str:
    """Render a snapshot back to ``/proc/stat`` text (cpu lines only)."""
    lines = []
    if snapshot.aggregate is not None:
        # the kernel pads the aggregate label with a second space
        lines.append(_format_line("cpu ", snapshot.aggregate))
    lines.extend(_format_line(f"cpu{c.cpu_index}", c) for c in snapshot.per_cpu)
    return "\n".join(lines) + "\n"


def user_load(snapshot: ProcStatSnapshot, cpu_index: int) -> int:
    """Jiffies the cpu spent in user mode; ``nice`` time is not included."""
    return snapshot[cpu_index].user
