"""Thread-to-core mapping policies.

Four policies share one interface (:class:`MappingPolicy`):

* ``static``: thread ``i`` of every program goes to usable core ``i mod N``.
* ``bll``: a single system-wide round-robin counter over the usable cores.
* ``xll``: picks the core whose user-mode jiffies grew least since the
  previous scan, penalised by the number of threads already pinned there.
* ``linux``: a simplified O(1)-style scheduler with per-core runqueues,
  placement on the shortest queue and periodic migration-based balancing.

The first three pin a thread once at creation and never move it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

from .procstat import ProcStatSnapshot, user_load

XLL_LOAD_BUMP = 10
SCHED_LOAD_SCALE = 1024
BALANCE_INTERVAL = 10

POLICY_NAMES = ("static", "bll", "xll", "linux")


@dataclass
class CoreRecord:
    index: int
    load: int = 0
    change: int = 0
    pinned: int = 0


@dataclass
class CoreSet:
    """The usable cores and the shared XLL bookkeeping table."""

    usable: tuple[int, ...]
    records: dict[int, CoreRecord] = field(default_factory=dict)

    def __post_init__(self):
        self.usable = tuple(self.usable)
        if not self.usable:
            raise ValueError("at least one usable core is required")
        if len(set(self.usable)) != len(self.usable):
            raise ValueError("usable core ids must be unique")
        if not self.records:
            self.reset()

    @classmethod
    def machine(cls, usable_cores: int = 63, reserve_core0: bool = True) -> "CoreSet":
        """``usable_cores`` cores numbered from 1 (core 0 left to the OS) or from 0."""
        first = 1 if reserve_core0 else 0
        return cls(tuple(range(first, first + usable_cores)))

    def reset(self) -> None:
        self.records = {i: CoreRecord(i) for i in self.usable}

    def __len__(self) -> int:
        return len(self.usable)


@dataclass(frozen=True)
class MappingDecision:
    program_id: int
    thread_id: int
    target_core: int
    decision_tick: int


@dataclass
class BllCounter:
    value: int = 0


def static_map(thread_id: int, cores: CoreSet) -> int:
    if thread_id < 0:
        raise ValueError("thread_id must be non-negative")
    return cores.usable[thread_id % len(cores.usable)]


def bll_map(state: BllCounter, cores: CoreSet) -> int:
    target = cores.usable[state.value % len(cores.usable)]
    state.value += 1
    return target


def xll_map(cores: CoreSet, snapshot: ProcStatSnapshot, bump: int = XLL_LOAD_BUMP) -> int:
    """One FindBestTarget call over the shared table.

    The caller must hold the table lock for the whole call. On a missing
    core the table is left untouched.
    """
    # read every counter first so a lookup failure cannot leave a half-updated table
    current = [user_load(snapshot, i) for i in cores.usable]
    records = [cores.records[i] for i in cores.usable]
    for rec, cur in zip(records, current):
        rec.change = cur - rec.load + rec.pinned
        rec.load = cur + bump
    best = 0
    for pos in range(1, len(records)):
        if records[pos].change < records[best].change:
            best = pos
    records[best].pinned += 1
    return records[best].index


def _is_pinned(thread) -> bool:
    return bool(getattr(thread, "pinned", False))


def _runnable(thread) -> bool:
    return getattr(thread, "runnable", True)


def shortest_runqueue(runqueues: dict[int, list], is_runnable=_runnable) -> int:
    return min(runqueues, key=lambda c: (sum(1 for t in runqueues[c] if is_runnable(t)), c))


def linux_like_place(thread, runqueues: dict[int, list], is_runnable=_runnable) -> int:
    """Enqueue ``thread`` on the queue with fewest runnable threads (lowest core id on ties)."""
    target = shortest_runqueue(runqueues, is_runnable)
    runqueues[target].append(thread)
    return target


@dataclass(frozen=True)
class Migration:
    thread: object
    source: int
    target: int


def linux_like_balance(
    runqueues: dict[int, list],
    old_loads: dict[int, int],
    scale: int = SCHED_LOAD_SCALE,
    is_runnable: Callable[[object], bool] = _runnable,
) -> list[Migration]:
    """Periodic runqueue balancing.

    ``cpu_load`` of a core is the mean of its current load (runnable
    threads times ``scale``) and its previous ``cpu_load`` in ``old_loads``,
    in integer arithmetic. Sources are cores with at least two runnable
    threads, one of them unpinned (the running thread itself is never
    pulled). While the busiest source exceeds the idlest core by more than
    half a task's worth of ``cpu_load``, the source's most recently queued
    unpinned runnable thread moves to the idlest core. Each move lowers the
    integer sum of squared ``cpu_load`` values, so the loop terminates.

    ``runqueues`` and ``old_loads`` are updated in place.
    """
    if scale % 2:
        raise ValueError("scale must be even")
    cores = sorted(runqueues)
    nr = {c: sum(1 for t in runqueues[c] if is_runnable(t)) for c in cores}
    old = {c: int(old_loads.get(c, 0)) for c in cores}

    def cpu_load(c):
        return (nr[c] * scale + old[c]) >> 1

    migrations = []
    while True:
        sources = [
            c for c in cores
            if nr[c] >= 2 and any(is_runnable(t) and not _is_pinned(t) for t in runqueues[c])
        ]
        if not sources:
            break
        busiest = max(sources, key=lambda c: (cpu_load(c), -c))
        idlest = min(cores, key=lambda c: (cpu_load(c), c))
        if cpu_load(busiest) - cpu_load(idlest) <= scale // 2:
            break
        queue = runqueues[busiest]
        pos = max(i for i, t in enumerate(queue) if is_runnable(t) and not _is_pinned(t))
        thread = queue.pop(pos)
        runqueues[idlest].append(thread)
        nr[busiest] -= 1
        nr[idlest] += 1
        migrations.append(Migration(thread, busiest, idlest))

    for c in cores:
        old_loads[c] = cpu_load(c)
    return migrations


class SystemView(Protocol):
    """What a policy may observe about the machine when mapping a thread."""

    tick: int

    def snapshot(self) -> ProcStatSnapshot: ...

    def runqueues(self) -> dict[int, list]: ...


class MappingPolicy:
    """Base class: one global lock around every mapping call."""

    name = "base"
    migrates = False

    def __init__(self, cores: CoreSet):
        self.cores = cores
        self.lock = threading.Lock()
        self.decisions: list[MappingDecision] = []

    def reset(self) -> None:
        with self.lock:
            self.cores.reset()
            self.decisions.clear()
            self._reset_state()

    def _reset_state(self) -> None:
        pass

    def map_thread(self, program_id: int, thread_id: int, view: SystemView) -> int:
        with self.lock:
            core = self._select(thread_id, view)
            self.decisions.append(MappingDecision(program_id, thread_id, core, view.tick))
            return core

    def _select(self, thread_id: int, view: SystemView) -> int:
        raise NotImplementedError

    def balance(self, view: SystemView) -> list[Migration]:
        return []


class StaticPolicy(MappingPolicy):
    name = "static"

    def _select(self, thread_id, view):
        return static_map(thread_id, self.cores)


class BLLPolicy(MappingPolicy):
    name = "bll"

    def __init__(self, cores: CoreSet):
        super().__init__(cores)
        self.counter = BllCounter()

    def _reset_state(self):
        self.counter = BllCounter()

    def _select(self, thread_id, view):
        return bll_map(self.counter, self.cores)


class XLLPolicy(MappingPolicy):
    name = "xll"

    def __init__(self, cores: CoreSet, bump: int = XLL_LOAD_BUMP):
        super().__init__(cores)
        self.bump = bump

    def _select(self, thread_id, view):
        return xll_map(self.cores, view.snapshot(), self.bump)


class LinuxLikePolicy(MappingPolicy):
    """Shortest-runqueue placement plus periodic ``cpu_load`` balancing.

    Placement looks only at queue lengths; the engine owns the runqueues and
    appends the thread itself once a core is chosen.
    """

    name = "linux"
    migrates = True

    def __init__(
        self,
        cores: CoreSet,
        scale: int = SCHED_LOAD_SCALE,
        balance_interval: int = BALANCE_INTERVAL,
    ):
        super().__init__(cores)
        self.scale = scale
        self.balance_interval = balance_interval
        self.old_loads: dict[int, int] = {}

    def _reset_state(self):
        self.old_loads = {}

    def _select(self, thread_id, view):
        return shortest_runqueue(view.runqueues())

    def balance(self, view: SystemView) -> list[Migration]:
        with self.lock:
            return linux_like_balance(view.runqueues(), self.old_loads, self.scale)


def make_policy(
    name: str,
    cores: CoreSet,
    *,
    xll_bump: int = XLL_LOAD_BUMP,
    sched_load_scale: int = SCHED_LOAD_SCALE,
    balance_interval: int = BALANCE_INTERVAL,
) -> MappingPolicy:
    if name == "static":
        return StaticPolicy(cores)
    if name == "bll":
        return BLLPolicy(cores)
    if name == "xll":
        return XLLPolicy(cores, xll_bump)
    if name == "linux":
        return LinuxLikePolicy(cores, sched_load_scale, balance_interval)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")


def parse_policy_list(text: str | Iterable[str] | None) -> list[str]:
    """``"bll,xll"`` -> ``["bll", "xll"]``; empty means all four."""
    if text is None:
        return list(POLICY_NAMES)
    items = text.split(",") if isinstance(text, str) else list(text)
    names = [s.strip().lower() for s in items if s.strip()]
    if not names:
        return list(POLICY_NAMES)
    for n in names:
        if n not in POLICY_NAMES:
            raise ValueError(f"unknown policy {n!r}; expected one of {', '.join(POLICY_NAMES)}")
    return names
