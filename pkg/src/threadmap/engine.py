"""Jiffy-granular simulator of a multiprogrammed manycore machine.

Programs arrive, run a serial initialisation phase, then create their
threads one by one. Each thread is placed by the active mapping policy at
the moment it is created. Cores execute resident threads by processor
sharing: each jiffy of a core is split equally among its runnable threads.

A program's parallel work is a single pool shared by all of its threads
(the idealised limit of task stealing in a task-parallel runtime): every
jiffy a thread executes is taken from its program's pool, and the program
completes when the pool is empty. Work and core time are exact rationals,
so per-core busy time always equals the work executed on that core.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .policies import (
    BALANCE_INTERVAL,
    SCHED_LOAD_SCALE,
    XLL_LOAD_BUMP,
    CoreSet,
    MappingPolicy,
    make_policy,
)
from .procstat import JIFFY_MS, CpuJiffies, ProcStatSnapshot, format_proc_stat, parse_proc_stat
from .workloads import WorkloadModel, program_work_units


ZERO = Fraction(0)


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    usable_cores: int = 63
    reserve_core0: bool = True
    jiffy_ms: int = JIFFY_MS
    policy: str = "xll"
    xll_bump: int = XLL_LOAD_BUMP
    sched_load_scale: int = SCHED_LOAD_SCALE
    balance_interval: int = BALANCE_INTERVAL
    rng_seed: int = 0
    snapshot_staleness: int = 0
    # extra random staleness in [0, staleness_jitter] drawn per scan
    staleness_jitter: int = 0
    # jiffies between the creation of consecutive threads of one program
    thread_spawn_gap: int = 1
    trace_interval: int = 10
    max_ticks: int = 5_000_000

    def __post_init__(self):
        if self.usable_cores < 1:
            raise ValueError("usable_cores must be >= 1")
        if self.snapshot_staleness < 0 or self.staleness_jitter < 0:
            raise ValueError("snapshot staleness must be >= 0")
        if self.thread_spawn_gap < 0:
            raise ValueError("thread_spawn_gap must be >= 0")
        if self.balance_interval < 1 or self.trace_interval < 1:
            raise ValueError("intervals must be >= 1")

    def core_set(self) -> CoreSet:
        return CoreSet.machine(self.usable_cores, self.reserve_core0)

    @property
    def machine_cores(self) -> int:
        return self.usable_cores + (1 if self.reserve_core0 else 0)


@dataclass(eq=False)
class SimThread:
    program_id: int
    thread_id: int
    core: int
    start_tick: int
    pinned: bool = True
    state: str = "created"
    executed: Fraction = ZERO

    @property
    def runnable(self) -> bool:
        return self.state == "running"


@dataclass(eq=False)
class SimProgram:
    program_id: int
    model: WorkloadModel
    submit_tick: int
    work_units: int
    remaining: Fraction = ZERO
    threads: list = field(default_factory=list)
    completion_tick: Optional[int] = None

    @property
    def spawn_tick(self) -> int:
        return self.submit_tick + self.model.init_jiffies

    def creation_tick(self, thread_id: int, gap: int) -> int:
        return self.spawn_tick + thread_id * gap

    @property
    def done(self) -> bool:
        return self.completion_tick is not None

    @property
    def turnaround(self) -> Optional[int]:
        if self.completion_tick is None:
            return None
        return self.completion_tick - self.submit_tick


@dataclass
class CoreCounter:
    core: int
    user: Fraction = ZERO
    idle: Fraction = ZERO

    @property
    def user_jiffies(self) -> int:
        return math.floor(self.user)


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    kind: str
    program: int
    thread: Optional[int] = None
    core: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(
            {"tick": self.tick, "kind": self.kind, "program": self.program,
             "thread": self.thread, "core": self.core},
            separators=(",", ":"),
        )


@dataclass
class _Segment:
    """Counters at ``tick`` and their per-jiffy growth until the next segment."""

    tick: int
    users: dict
    rates: dict


class Simulator:
    """One simulated machine running one mapping policy.

    >>> from threadmap.workloads import WorkloadModel
    >>> sim = Simulator(SimConfig(policy="static"))
    >>> pid = sim.submit(WorkloadModel("w", total_work=100, init_jiffies=5), at=0)
    >>> sim.run_until_idle()
    105
    """

    def __init__(self, config: Optional[SimConfig] = None, policy: Optional[MappingPolicy] = None):
        self.config = config or SimConfig()
        cfg = self.config
        self.cores = cfg.core_set() if policy is None else policy.cores
        self.policy = policy or make_policy(
            cfg.policy,
            self.cores,
            xll_bump=cfg.xll_bump,
            sched_load_scale=cfg.sched_load_scale,
            balance_interval=cfg.balance_interval,
        )
        self.policy.reset()
        self.tick = 0
        self.programs: list[SimProgram] = []
        first = 0
        self.machine = tuple(range(first, first + cfg.machine_cores))
        self.counters = {c: CoreCounter(c) for c in self.machine}
        self._runqueues: dict[int, list[SimThread]] = {c: [] for c in self.cores.usable}
        self.events: list[TraceEvent] = []
        self.load_trace: list[tuple[int, int, int]] = []
        self._rng = random.Random(cfg.rng_seed)
        self._history: list[_Segment] = []
        self._sample(0)

    # -- submission -----------------------------------------------------

    def submit(self, model: WorkloadModel, at: int) -> int:
        if at < self.tick:
            raise ValueError(f"cannot submit at tick {at}, clock is at {self.tick}")
        pid = len(self.programs)
        units = program_work_units(model)
        self.programs.append(SimProgram(pid, model, at, units, Fraction(units)))
        return pid

    # -- SystemView ------------------------------------------------------

    def runqueues(self) -> dict[int, list[SimThread]]:
        return self._runqueues

    def snapshot(self) -> ProcStatSnapshot:
        lag = self.config.snapshot_staleness
        if self.config.staleness_jitter:
            lag += self._rng.randint(0, self.config.staleness_jitter)
        return self.synth_snapshot(lag)

    def synth_snapshot(self, staleness: Optional[int] = None) -> ProcStatSnapshot:
        """Render the core counters as ``/proc/stat`` text and parse it back.

        The image reflects the counters ``staleness`` jiffies ago (clamped at
        tick 0); ``None`` uses the configured staleness.
        """
        if staleness is None:
            staleness = self.config.snapshot_staleness
        at = max(0, self.tick - staleness)
        users = self._users_at(at)
        per_cpu = []
        for c in self.machine:
            user = math.floor(users[c])
            per_cpu.append(CpuJiffies(c, user, 0, 0, at - user, (0,) * 6))
        aggregate = CpuJiffies(
            -1,
            sum(p.user for p in per_cpu), 0, 0,
            sum(p.idle for p in per_cpu), (0,) * 6,
        )
        text = format_proc_stat(ProcStatSnapshot(tuple(per_cpu), aggregate, at))
        return parse_proc_stat(text, capture_tick=at)

    def _users_at(self, at: int) -> dict:
        if at >= self.tick:
            return {c: k.user for c, k in self.counters.items()}
        for seg in reversed(self._history):
            if seg.tick <= at:
                return {c: seg.users[c] + (at - seg.tick) * seg.rates[c] for c in self.machine}
        return {c: ZERO for c in self.machine}

    # -- accounting ------------------------------------------------------

    def total_user(self) -> Fraction:
        return sum((k.user for k in self.counters.values()), ZERO)

    def executed_work(self) -> Fraction:
        return sum((p.work_units - p.remaining for p in self.programs), ZERO)

    @property
    def finished(self) -> bool:
        return bool(self.programs) and all(p.done for p in self.programs)

    # -- per-tick actions -------------------------------------------------

    def _emit(self, kind, program, thread=None, core=None):
        self.events.append(TraceEvent(self.tick, kind, program, thread, core))

    def _begin_tick(self) -> None:
        t = self.tick
        gap = self.config.thread_spawn_gap
        for prog in self.programs:
            if prog.submit_tick == t:
                self._emit("submit", prog.program_id)
        for prog in self.programs:
            if prog.done or prog.spawn_tick > t:
                continue
            while len(prog.threads) < prog.model.thread_count:
                tid = len(prog.threads)
                if prog.creation_tick(tid, gap) != t:
                    break
                self._create_thread(prog, tid)
        for prog in self.programs:
            for th in prog.threads:
                if th.state == "created" and th.start_tick == t:
                    th.state = "running"
                    if prog.model.start_delay:
                        self._emit("start", prog.program_id, th.thread_id, th.core)
        if self.policy.migrates and t > 0 and t % self.config.balance_interval == 0:
            for mig in self.policy.balance(self):
                mig.thread.core = mig.target
                self._emit("migrate", mig.thread.program_id, mig.thread.thread_id, mig.target)

    def _create_thread(self, prog: SimProgram, tid: int) -> None:
        core = self.policy.map_thread(prog.program_id, tid, self)
        if core not in self._runqueues:
            raise SimulationError(f"policy {self.policy.name} returned unusable core {core}")
        th = SimThread(
            prog.program_id, tid, core,
            start_tick=self.tick + prog.model.start_delay,
            pinned=not self.policy.migrates,
        )
        prog.threads.append(th)
        self._runqueues[core].append(th)
        self._emit("map", prog.program_id, tid, core)

    def _next_action_tick(self) -> Optional[int]:
        t = self.tick
        gap = self.config.thread_spawn_gap
        candidates = []
        for prog in self.programs:
            if prog.done:
                continue
            if prog.submit_tick > t:
                candidates.append(prog.submit_tick)
            n = len(prog.threads)
            if n < prog.model.thread_count:
                candidates.append(max(prog.creation_tick(n, gap), t + 1))
            for th in prog.threads:
                if th.state == "created":
                    candidates.append(max(th.start_tick, t + 1))
        if self.policy.migrates and any(not p.done for p in self.programs):
            iv = self.config.balance_interval
            candidates.append((t // iv + 1) * iv)
        return min(candidates) if candidates else None

    def _shares(self) -> dict:
        """Each runnable thread's share of its core for one jiffy."""
        shares = {}
        for queue in self._runqueues.values():
            running = [th for th in queue if th.runnable]
            if running:
                share = Fraction(1, len(running))
                for th in running:
                    shares[th] = share
        return shares

    @staticmethod
    def _demand(shares: dict) -> dict:
        """Per-jiffy pool consumption of each program."""
        demand = {}
        for th, share in shares.items():
            demand[th.program_id] = demand.get(th.program_id, ZERO) + share
        return demand

    def _execute(self, span: int, shares: dict) -> None:
        """Run ``span`` jiffies with fixed shares.

        A pool may run dry only within a single-jiffy span (see
        :meth:`_quiet_span`). A program whose pool runs dry mid-jiffy leaves
        the rest of its threads' slots unused.
        """
        factor = {}
        for pid, d in self._demand(shares).items():
            prog = self.programs[pid]
            need = d * span
            factor[pid] = Fraction(1) if need <= prog.remaining else prog.remaining / need
        busy = {c: ZERO for c in self.machine}
        for th, share in shares.items():
            work = share * span * factor[th.program_id]
            th.executed += work
            self.programs[th.program_id].remaining -= work
            busy[th.core] += work
        if self.config.snapshot_staleness or self.config.staleness_jitter:
            self._history.append(_Segment(
                self.tick,
                {c: k.user for c, k in self.counters.items()},
                {c: busy[c] / span for c in self.machine},
            ))
            self._prune_history()
        start = self.tick
        for c, k in self.counters.items():
            k.user += busy[c]
            k.idle += span - busy[c]
        self.tick += span
        iv = self.config.trace_interval
        first = (start // iv + 1) * iv
        for s in range(first, self.tick + 1, iv):
            self._sample(s, start, busy, span)

    def _prune_history(self) -> None:
        horizon = self.tick - self.config.snapshot_staleness - self.config.staleness_jitter
        while len(self._history) > 1 and self._history[1].tick <= horizon:
            self._history.pop(0)

    def _sample(self, at: int, start: int = 0, busy: Optional[dict] = None, span: int = 1) -> None:
        for c in self.cores.usable:
            k = self.counters[c]
            if busy is None or at == self.tick:
                user = k.user
            else:
                user = k.user - busy[c] + busy[c] * (at - start) / span
            self.load_trace.append((at, c, math.floor(user)))

    def _finish_programs(self) -> None:
        for prog in self.programs:
            if prog.done or not prog.threads or prog.remaining > 0:
                continue
            prog.completion_tick = self.tick
            for th in prog.threads:
                th.state = "done"
                queue = self._runqueues[th.core]
                queue.remove(th)
            self._emit("complete", prog.program_id)

    # -- driving ---------------------------------------------------------

    def step(self) -> int:
        """Advance the clock by exactly one jiffy."""
        if self.finished:
            raise SimulationError("simulation already finished")
        self._begin_tick()
        self._execute(1, self._shares())
        self._finish_programs()
        return self.tick

    def _quiet_span(self, shares: dict) -> int:
        """Jiffies that can run in one go: no new actions and no pool running dry."""
        span = math.inf
        nxt = self._next_action_tick()
        if nxt is not None:
            span = nxt - self.tick
        for pid, d in self._demand(shares).items():
            rem = self.programs[pid].remaining
            # largest m with m * d < rem
            span = min(span, math.ceil(rem / d) - 1)
        return span

    def run_until_idle(self) -> int:
        if not self.programs:
            raise SimulationError("no programs submitted")
        while not self.finished:
            if self.tick > self.config.max_ticks:
                raise SimulationError(self._stuck_report())
            self._begin_tick()
            shares = self._shares()
            span = self._quiet_span(shares)
            if span == math.inf:
                raise SimulationError(self._stuck_report())
            span = max(1, min(span, self.config.max_ticks + 1 - self.tick))
            self._execute(span, shares)
            self._finish_programs()
        return self.tick

    def _stuck_report(self) -> str:
        lines = [f"no progress possible at tick {self.tick} (budget {self.config.max_ticks})"]
        for prog in self.programs:
            if prog.done:
                continue
            lines.append(
                f"  program {prog.program_id} ({prog.model.name}): remaining {float(prog.remaining):.3f}, "
                f"{len(prog.threads)}/{prog.model.thread_count} threads created"
            )
            for th in prog.threads:
                lines.append(f"    thread {th.thread_id} on core {th.core} state {th.state}")
        return "\n".join(lines)

    # -- output ----------------------------------------------------------

    def trace_lines(self) -> list[str]:
        return [ev.to_json() for ev in self.events]

    def mapping_of(self, program_id: int) -> list[int]:
        """Initial core of every thread of a program, by thread id."""
        cores = {}
        for ev in self.events:
            if ev.kind == "map" and ev.program == program_id:
                cores[ev.thread] = ev.core
        return [cores[i] for i in sorted(cores)]
