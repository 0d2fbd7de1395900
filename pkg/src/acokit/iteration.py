"""Asynchronous execution schedules and iteration of decomposed operators.

A schedule is a finite-horizon realization of activation sets and delay
maps.  Processor indices are 0-based.  Admissibility at finite horizon
means: delays point strictly into the past (causality), no value older
than the staleness bound is ever read, and every processor activates in
every window of the fairness length.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass

from .errors import PreconditionError, ScheduleRejectedError


class DecomposedOperator:
    """Operator on a finite product domain, split per processor.

    Construct with :meth:`from_table` (an explicit state-to-state mapping)
    or :meth:`from_global` (a callable returning the full next state).
    """

    def __init__(self, domains, global_fn):
        self.domains = tuple(tuple(d) for d in domains)
        if not self.domains or any(not d for d in self.domains):
            raise PreconditionError("every processor needs a nonempty domain")
        for dom in self.domains:
            if len(set(dom)) != len(dom):
                raise PreconditionError("domain elements must be distinct")
        self._domain_sets = tuple(frozenset(d) for d in self.domains)
        self._global = global_fn

    @classmethod
    def from_global(cls, domains, fn):
        return cls(domains, fn)

    @classmethod
    def from_table(cls, domains, table):
        op = cls(domains, lambda state: table[state])
        missing = [s for s in op.iter_states() if s not in table]
        if missing:
            raise PreconditionError(f"table misses state {missing[0]!r}")
        for state in op.iter_states():
            op._check_output(table[state])
        return op

    @property
    def processors(self) -> int:
        return len(self.domains)

    def size(self) -> int:
        total = 1
        for d in self.domains:
            total *= len(d)
        return total

    def iter_states(self):
        return itertools.product(*self.domains)

    def _check_output(self, out):
        if not isinstance(out, tuple) or len(out) != self.processors:
            raise PreconditionError(f"operator produced a bad state {out!r}")
        for value, dom in zip(out, self._domain_sets):
            if value not in dom:
                raise PreconditionError(
                    f"operator produced {value!r} outside its component domain")

    def check_state(self, state):
        if not isinstance(state, tuple) or len(state) != self.processors:
            raise PreconditionError(f"state {state!r} has the wrong shape")
        for value, dom in zip(state, self._domain_sets):
            if value not in dom:
                raise PreconditionError(f"{value!r} not in component domain")

    def apply(self, state: tuple) -> tuple:
        try:
            out = self._global(state)
        except KeyError:
            raise PreconditionError(f"state {state!r} outside domain") from None
        return tuple(out)

    def component(self, i: int, state: tuple):
        return self.apply(state)[i]

    def validate(self):
        """Exhaustively confirm every component is total over the domain."""
        for state in self.iter_states():
            self._check_output(self.apply(state))


@dataclass(frozen=True)
class Schedule:
    """Finite-horizon activation sets and delay maps.

    ``activations[t-1]`` is the processor set active at tick ``t``;
    ``delays[t-1][i][j]`` is the time whose value of processor ``j`` is
    read by ``i`` when it activates at ``t``.  ``staleness_bound`` and
    ``fairness_window`` are the bounds this schedule claims to satisfy;
    :func:`check_admissible_prefix` verifies them.
    """

    processors: int
    horizon: int
    activations: tuple[frozenset, ...]
    delays: tuple
    staleness_bound: int
    fairness_window: int

    def __post_init__(self):
        if self.processors < 1:
            raise ScheduleRejectedError("need at least one processor")
        if self.horizon < 0:
            raise ScheduleRejectedError("horizon must be non-negative")
        if len(self.activations) != self.horizon or len(self.delays) != self.horizon:
            raise ScheduleRejectedError("activations/delays must cover the horizon")
        if self.staleness_bound < 1 or self.fairness_window < 1:
            raise ScheduleRejectedError("staleness bound and fairness window >= 1")
        k = self.processors
        for active in self.activations:
            if not active <= frozenset(range(k)):
                raise ScheduleRejectedError(f"activation set {set(active)} out of range")
        for row in self.delays:
            if len(row) != k or any(len(r) != k for r in row):
                raise ScheduleRejectedError("delay table must be k x k per tick")


def make_synchronous_schedule(k: int, horizon: int) -> Schedule:
    """All processors active every tick, reading the immediately preceding
    state."""
    if k < 1 or horizon < 1:
        raise ScheduleRejectedError("k and horizon must be at least 1")
    everyone = frozenset(range(k))
    activations = tuple(everyone for _ in range(horizon))
    delays = tuple(
        tuple(tuple(t - 1 for _ in range(k)) for _ in range(k))
        for t in range(1, horizon + 1))
    return Schedule(k, horizon, activations, delays,
                    staleness_bound=1, fairness_window=1)


def sample_schedule(k: int, horizon: int, seed: int, *,
                    activation_prob: float = 0.5,
                    max_staleness: int = 5,
                    fairness_window: int = 8) -> Schedule:
    """Draw a random admissible schedule, deterministically from the seed.

    Each processor activates with the given probability per tick (forced
    when it would otherwise miss a fairness window) and each delay is
    uniform over the staleness-bounded past.
    """
    if not 0 < activation_prob <= 1:
        raise ScheduleRejectedError("activation_prob must be in (0, 1]")
    if max_staleness < 1:
        raise ScheduleRejectedError("max_staleness must be >= 1")
    needed = math.ceil(1 / activation_prob)
    if fairness_window < needed:
        raise ScheduleRejectedError(
            f"fairness_window {fairness_window} below ceil(1/activation_prob)"
            f" = {needed}; fairness would rely entirely on forcing")
    if k < 1 or horizon < 1:
        raise ScheduleRejectedError("k and horizon must be at least 1")

    rng = random.Random(seed)
    last_active = [0] * k
    activations = []
    delays = []
    for t in range(1, horizon + 1):
        active = {i for i in range(k) if rng.random() < activation_prob}
        for i in range(k):
            if t - last_active[i] >= fairness_window:
                active.add(i)
        for i in active:
            last_active[i] = t
        activations.append(frozenset(active))
        low = max(0, t - max_staleness)
        delays.append(tuple(
            tuple(rng.randint(low, t - 1) for _ in range(k))
            for _ in range(k)))
    return Schedule(k, horizon, tuple(activations), tuple(delays),
                    staleness_bound=max_staleness,
                    fairness_window=fairness_window)


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    violation: tuple | None = None


def check_admissible_prefix(schedule: Schedule) -> AdmissibilityReport:
    """Verify causality, bounded staleness, and windowed fairness.

    Returns the first violation as ``(kind, details...)`` with kinds
    ``causality``, ``staleness``, and ``fairness``.
    """
    k = schedule.processors
    B = schedule.staleness_bound
    W = schedule.fairness_window
    last_active = [0] * k
    for t in range(1, schedule.horizon + 1):
        row = schedule.delays[t - 1]
        for i in range(k):
            for j in range(k):
                b = row[i][j]
                if not 0 <= b <= t - 1:
                    return AdmissibilityReport(False, ("causality", t, i, j, b))
                if t - b > B:
                    return AdmissibilityReport(False, ("staleness", t, i, j, b))
        for i in range(k):
            if t - last_active[i] > W:
                window = (last_active[i] + 1, last_active[i] + W)
                return AdmissibilityReport(False, ("fairness", window, i))
        for i in schedule.activations[t - 1]:
            last_active[i] = t
    return AdmissibilityReport(True)


@dataclass(frozen=True)
class Trajectory:
    """States ``x(0..T)`` of a run plus how it ended.

    ``converged_at`` is the first tick after which the state never changed
    (only set when that is certain within the horizon).  ``status`` is one
    of ``converged``, ``cycle``, ``horizon-exhausted``.
    """

    states: tuple[tuple, ...]
    converged_at: int | None
    status: str
    cycle_start: int | None = None
    cycle_length: int | None = None

    def history(self, i: int) -> tuple:
        return tuple(state[i] for state in self.states)

    @property
    def final(self) -> tuple:
        return self.states[-1]


def run_sync(op: DecomposedOperator, start: tuple, max_steps: int) -> Trajectory:
    """Iterate the assembled operator, stopping at a fixed point or the
    first repeated state (reported as a cycle)."""
    op.check_state(tuple(start))
    states = [tuple(start)]
    seen = {states[0]: 0}
    for t in range(1, max_steps + 1):
        nxt = op.apply(states[-1])
        states.append(nxt)
        if nxt == states[-2]:
            return Trajectory(tuple(states), t - 1, "converged")
        if nxt in seen:
            return Trajectory(tuple(states), None, "cycle",
                              cycle_start=seen[nxt],
                              cycle_length=t - seen[nxt])
        seen[nxt] = t
    return Trajectory(tuple(states), None, "horizon-exhausted")


def run_async(op: DecomposedOperator, start: tuple, schedule: Schedule) -> Trajectory:
    """Run the asynchronous recurrence under a schedule.

    Inactive processors keep their value; active ones apply their component
    to the delayed view dictated by the schedule.  The run stops once the
    state has been quiet for ``staleness_bound + fairness_window`` ticks,
    after which no stale value can revive a change; ``converged_at`` is the
    last tick a change occurred.
    """
    start = tuple(start)
    op.check_state(start)
    if schedule.processors != op.processors:
        raise PreconditionError(
            f"schedule has {schedule.processors} processors, "
            f"operator has {op.processors}")
    report = check_admissible_prefix(schedule)
    if not report.ok:
        raise PreconditionError(
            f"schedule is not admissible: {report.violation}")

    quiet_needed = schedule.staleness_bound + schedule.fairness_window
    k = op.processors
    states = [start]
    last_change = 0
    converged = False
    for t in range(1, schedule.horizon + 1):
        prev = states[-1]
        row = schedule.delays[t - 1]
        nxt = list(prev)
        for i in sorted(schedule.activations[t - 1]):
            view = tuple(states[row[i][j]][j] for j in range(k))
            nxt[i] = op.component(i, view)
        nxt = tuple(nxt)
        states.append(nxt)
        if nxt != prev:
            last_change = t
        elif t - last_change >= quiet_needed:
            converged = True
            break
    else:
        converged = schedule.horizon - last_change >= quiet_needed
    if converged:
        return Trajectory(tuple(states), last_change, "converged")
    return Trajectory(tuple(states), None, "horizon-exhausted")


def load_schedule(source) -> Schedule:
    """Load a schedule file (JSON).

    Fields: ``horizon``, ``activations`` (array per tick of processor
    indices), ``delays`` (sparse triples ``[t, i, j, t']``; absent entries
    default to ``t - 1``).  The staleness bound and fairness window are
    inferred from the data.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    horizon = int(doc["horizon"])
    raw_acts = doc["activations"]
    if len(raw_acts) != horizon:
        raise ScheduleRejectedError("activations must list one set per tick")
    k = int(doc.get("processors", 0))
    if not k:
        k = max((max(a) + 1 for a in raw_acts if a), default=1)
    activations = tuple(frozenset(int(i) for i in a) for a in raw_acts)

    delay_rows = [
        [[t - 1] * k for _ in range(k)] for t in range(1, horizon + 1)]
    for entry in doc.get("delays", []):
        t, i, j, src = (int(x) for x in entry)
        if not 1 <= t <= horizon or not 0 <= i < k or not 0 <= j < k:
            raise ScheduleRejectedError(f"delay entry {entry!r} out of range")
        delay_rows[t - 1][i][j] = src
    delays = tuple(tuple(tuple(r) for r in row) for row in delay_rows)

    staleness = 1
    for t in range(1, horizon + 1):
        for i in range(k):
            for j in range(k):
                staleness = max(staleness, t - delay_rows[t - 1][i][j])
    last = [0] * k
    window = 1
    for t in range(1, horizon + 1):
        for i in range(k):
            if i in activations[t - 1]:
                window = max(window, t - last[i])
                last[i] = t
    for i in range(k):
        window = max(window, horizon - last[i])
    return Schedule(k, horizon, activations, delays,
                    staleness_bound=staleness,
                    fairness_window=max(1, window))


def load_operator(source):
    """Load an operator file (JSON): ``domains`` (array per processor),
    ``map`` (pairs ``[input_state, output_state]``), optional ``start``.

    Returns ``(operator, start_or_None)``.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    domains = [tuple(_scalar(v) for v in dom) for dom in doc["domains"]]
    table = {}
    for pair in doc["map"]:
        if len(pair) != 2:
            raise PreconditionError(f"map entry {pair!r} is not a pair")
        state = tuple(_scalar(v) for v in pair[0])
        image = tuple(_scalar(v) for v in pair[1])
        table[state] = image
    op = DecomposedOperator.from_table(domains, table)
    start = None
    if "start" in doc:
        start = tuple(_scalar(v) for v in doc["start"])
        op.check_state(start)
    return op, start


def _scalar(v):
    if isinstance(v, (str, int, bool)):
        return v
    raise PreconditionError(f"operator values must be scalars, got {v!r}")
