"""Trace-driven replay gating.

ST replay hands one global token along the recorded thread-id order: each
gate waits until the shared next_tid cell names its thread, and the finishing
thread publishes the next recorded id (or a terminal sentinel). DC/DE replay
gates on a shared completion counter per clock scope: an entry with epoch e
may enter once next_clock >= e, and every completed access increments
next_clock by one at gate_out. Because every epoch is at most its entry's
clock, the access with the lowest unexecuted clock is always runnable, so a
well-formed trace cannot deadlock. Under DC every epoch equals its clock and
the run is serialized exactly; under DE equal-epoch accesses run unordered,
possibly concurrently.

Waiting threads block on a condition variable and are woken by the gate_out
that unblocks them. A busy spin_policy polls the cell instead; that trades
CPU for latency and only pays off with a core per thread. Blocking is the
default because a polling thread that shares one interpreter with the thread
it waits for can hold the GIL for a full switch interval per handoff.

Any divergence (wrong region or kind, extra gates, leftover entries) aborts
the run: the failing thread raises with a structured report after flagging
the shared abort cell and waking all waiters, and every other waiting thread
exits with ReplayAborted instead of blocking forever.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

from .core import (
    AccessKind,
    ClockScope,
    GateConfig,
    Mode,
    RecordEntry,
    Scheme,
    SpinPolicy,
    TraceSet,
    read_trace_set,
    scope_text,
)
from .errors import (
    ConfigError,
    DivergenceError,
    IncompleteReplay,
    ReplayAborted,
    SchemeMismatch,
    TraceExhausted,
)

_KIND_NAMES = ("Load", "Store", "Exclusive")

# waits self-heal from a missed wakeup (and notice aborts) at this cadence
_WAIT_SLICE_S = 0.1


@dataclass
class DivergenceReport:
    """What replay expected at a gate versus what the workload did."""

    thread: int
    entry_index: int
    expected_region: int
    expected_kind: AccessKind
    actual_region: int
    actual_kind: AccessKind
    detail: str

    def __str__(self) -> str:
        return (
            f"divergence: thread {self.thread} entry {self.entry_index}: "
            f"expected region {self.expected_region} {_KIND_NAMES[self.expected_kind]}, "
            f"got region {self.actual_region} {_KIND_NAMES[self.actual_kind]} "
            f"({self.detail})"
        )


class _Cell:
    """A shared counter; reads are bare, writers hold the condition."""

    __slots__ = ("value", "cond")

    def __init__(self) -> None:
        self.value = 0
        self.cond = threading.Condition()


class ThreadCursor:
    """One thread's position in its recorded sequence."""

    __slots__ = ("tid", "entries", "pos", "remaining", "in_gate", "g_cell")

    def __init__(self, tid: int, entries: list[RecordEntry], remaining: int) -> None:
        self.tid = tid
        self.entries = entries
        self.pos = 0
        self.remaining = remaining  # ST: occurrences of tid left in the order
        self.in_gate = False
        self.g_cell: _Cell | None = None


def load_trace(trace_dir: Path, config: GateConfig) -> TraceSet:
    """Read a trace directory and cross-check it against the configuration."""
    trace = read_trace_set(trace_dir)
    m = trace.manifest
    if m.scheme is not config.scheme or m.clock_scope is not config.clock_scope:
        raise SchemeMismatch(
            f"trace was recorded as {m.scheme.name}/{scope_text(m.clock_scope)}, "
            f"config asks for {config.scheme.name}/{scope_text(config.clock_scope)}"
        )
    return trace


class Replayer:
    """Replay engine. One instance per replayed run."""

    def __init__(self, config: GateConfig, trace: TraceSet | None = None) -> None:
        if config.mode is not Mode.REPLAY:
            raise ConfigError("Replayer requires mode=Replay")
        if trace is None:
            if config.trace_dir is None:
                raise ConfigError("replay mode needs a trace directory")
            trace = load_trace(config.trace_dir, config)
        self.config = config
        self.trace = trace
        self._blocking = config.spin_policy is SpinPolicy.YIELDING
        self._cursors: dict[int, ThreadCursor] = {}
        self.aborted = False
        self.abort_reason = ""

        scheme = trace.manifest.scheme
        if scheme is Scheme.ST:
            order = trace.st_order or []
            self._order = order
            self._pos = 0
            self._next_tid = order[0] if order else -1
            self._order_cond = threading.Condition()
            self.gate_in = self._st_gate_in
            self.gate_out = self._st_gate_out
        else:
            self._per_region_clock = (
                trace.manifest.clock_scope is ClockScope.PER_REGION
            )
            self._global_cell = _Cell()
            cells: dict[int, _Cell] = {}
            if self._per_region_clock:
                assert trace.per_thread is not None
                for entries in trace.per_thread.values():
                    for entry in entries:
                        if entry[0] not in cells:
                            cells[entry[0]] = _Cell()
            self._cells = cells
            self.gate_in = self._clock_gate_in
            self.gate_out = self._clock_gate_out

    # -- common plumbing

    def register_thread(self, tid: int) -> ThreadCursor:
        if self.trace.st_order is not None:
            remaining = sum(1 for t in self.trace.st_order if t == tid)
            cursor = ThreadCursor(tid, [], remaining)
        else:
            assert self.trace.per_thread is not None
            cursor = ThreadCursor(tid, self.trace.per_thread.get(tid, []), 0)
        self._cursors[tid] = cursor
        return cursor

    def abort(self, reason: str = "") -> None:
        """Cancel every gate wait; blocked threads raise ReplayAborted."""
        if self.aborted:
            return
        self.abort_reason = reason
        self.aborted = True
        for cond in self._all_conds():
            with cond:
                cond.notify_all()

    def _all_conds(self) -> list[threading.Condition]:
        if self.trace.st_order is not None:
            return [self._order_cond]
        conds = [self._global_cell.cond]
        conds.extend(cell.cond for cell in self._cells.values())
        return conds

    def verify_consumed(self) -> None:
        residual = {}
        for tid, cursor in self._cursors.items():
            left = (
                cursor.remaining
                if self.trace.st_order is not None
                else len(cursor.entries) - cursor.pos
            )
            if left:
                residual[tid] = left
        if residual:
            raise IncompleteReplay(residual)

    # -- ST gates

    def _st_gate_in(self, tls: ThreadCursor, region: int, kind: int) -> None:
        if tls.remaining == 0:
            self.abort(f"thread {tls.tid} exhausted its recorded accesses")
            raise TraceExhausted(tls.tid, self._count_recorded(tls.tid))
        tid = tls.tid
        if self._next_tid == tid:
            return
        if self._blocking:
            with self._order_cond:
                while self._next_tid != tid:
                    if self.aborted:
                        raise ReplayAborted(self.abort_reason)
                    self._order_cond.wait(_WAIT_SLICE_S)
        else:
            while self._next_tid != tid:
                if self.aborted:
                    raise ReplayAborted(self.abort_reason)

    def _st_gate_out(self, tls: ThreadCursor, region: int, kind: int, ok: bool) -> None:
        if not ok:
            self.abort(f"guarded body failed on thread {tls.tid}")
            return
        tls.remaining -= 1
        pos = self._pos + 1
        self._pos = pos
        order = self._order
        with self._order_cond:
            self._next_tid = order[pos] if pos < len(order) else -1
            self._order_cond.notify_all()

    def _count_recorded(self, tid: int) -> int:
        return sum(1 for t in (self.trace.st_order or []) if t == tid)

    # -- DC/DE gates

    def _clock_gate_in(self, tls: ThreadCursor, region: int, kind: int) -> None:
        pos = tls.pos
        entries = tls.entries
        if pos >= len(entries):
            self.abort(f"thread {tls.tid} exhausted its recorded accesses")
            raise TraceExhausted(tls.tid, pos)
        entry = entries[pos]
        if entry[0] != region or entry[1] != kind:
            report = DivergenceReport(
                thread=tls.tid,
                entry_index=pos,
                expected_region=entry[0],
                expected_kind=entry[1],
                actual_region=region,
                actual_kind=AccessKind(kind),
                detail="recorded entry does not match this access",
            )
            self.abort(str(report))
            raise DivergenceError(report)
        cell = self._cells[entry[0]] if self._per_region_clock else self._global_cell
        tls.g_cell = cell
        epoch = entry[3]
        if cell.value >= epoch:
            return
        if self._blocking:
            with cell.cond:
                while cell.value < epoch:
                    if self.aborted:
                        raise ReplayAborted(self.abort_reason)
                    cell.cond.wait(_WAIT_SLICE_S)
        else:
            while cell.value < epoch:
                if self.aborted:
                    raise ReplayAborted(self.abort_reason)

    def _clock_gate_out(self, tls: ThreadCursor, region: int, kind: int, ok: bool) -> None:
        if not ok:
            self.abort(f"guarded body failed on thread {tls.tid}")
            return
        tls.pos += 1
        cell = tls.g_cell
        with cell.cond:
            cell.value += 1
            cell.cond.notify_all()
