"""Order recording: serialized (ST), distributed clock (DC), distributed epoch (DE).

All three schemes run the guarded body inside a record lock. ST appends the
thread id to one shared order file under a single global lock. DC consumes a
logical clock inside the lock and appends the entry to the calling thread's
own in-memory buffer after unlocking, so buffer growth overlaps other
threads' critical sections. DE additionally folds clocks into epochs on the
fly: consecutive loads on a region share the epoch of the run's first clock,
and of k consecutive stores the first k-1 share the run start while the last
keeps its own clock. Sharing is safe because grouped loads all observe the
same cell state and every grouped store is overwritten before the next read.

A store cannot know at gate time whether it ends its run, so it is buffered
as a placeholder slot and finalized by the next access to the same region
(or by finalize_run, which serializes a still-pending store at its own
clock).
"""

from __future__ import annotations

import threading
from collections import Counter, deque
from pathlib import Path
from typing import Sequence

from .core import (
    AccessKind,
    ClockScope,
    GateConfig,
    Mode,
    ORDER_FILE_NAME,
    MANIFEST_NAME,
    RecordEntry,
    Scheme,
    TraceManifest,
    TraceSet,
    header_bytes,
    thread_file_name,
    write_manifest,
    write_thread_file,
)
from .errors import ConfigError, GateError, PendingInGate, RecordIoError

import struct

_TID = struct.Struct("<I")

_LOAD = int(AccessKind.LOAD)
_STORE = int(AccessKind.STORE)
_EXCLUSIVE = int(AccessKind.EXCLUSIVE)
_KINDS = (AccessKind.LOAD, AccessKind.STORE, AccessKind.EXCLUSIVE)

# buffered entry slots are plain 4-item lists [region, kind, clock, epoch];
# a store placeholder carries epoch None until finalized
_EPOCH = 3


class RegionState:
    """Per-region recorder state: lock, clock, run markers, pending store.

    history is a debugging ring of the last (clock, kind) pairs; epoch
    assignment itself reads only the run markers and the pending slot.
    """

    __slots__ = ("region", "lock", "clock", "load_run_start", "store_run_start",
                 "pending", "history")

    def __init__(self, region: int, history_capacity: int) -> None:
        self.region = region
        self.lock = threading.Lock()
        self.clock = 0
        self.load_run_start: int | None = None
        self.store_run_start: int | None = None
        # (thread, clock, slot, buffer) of the unfinalized store, if any
        self.pending: tuple[int, int, list, "ThreadRecordBuffer | None"] | None = None
        self.history: deque[tuple[int, int]] = deque(maxlen=history_capacity)


class ThreadRecordBuffer:
    """One thread's entry buffer plus its gate bookkeeping.

    The owning thread appends; any thread may finalize a placeholder slot it
    holds a reference to, taking the buffer lock for the write.
    """

    __slots__ = ("tid", "entries", "lock", "in_gate", "g_state")

    def __init__(self, tid: int) -> None:
        self.tid = tid
        self.entries: list[list] = []
        self.lock = threading.Lock()
        self.in_gate = False
        self.g_state: RegionState | None = None


def de_assign(
    state: RegionState,
    clock: int,
    kind: int,
    thread: int = 0,
    slot: list | None = None,
    buffer: "ThreadRecordBuffer | None" = None,
) -> tuple[int | None, tuple[list, int, "ThreadRecordBuffer | None"] | None]:
    """Streaming epoch rule for one access; caller holds the region's lock.

    Returns (epoch, finalization). epoch is None for a Store, whose slot is
    registered as the region's pending placeholder instead. finalization is
    (slot, epoch, owning buffer) for a previously pending store that this
    access just closed out, or None.
    """
    fin = None
    pending = state.pending
    if kind == _LOAD:
        if pending is not None:
            # a load ends the store run: the run's last store keeps its own clock
            fin = (pending[2], pending[1], pending[3])
            state.pending = None
            state.store_run_start = None
        if state.load_run_start is None:
            state.load_run_start = clock
        return state.load_run_start, fin
    if kind == _STORE:
        if pending is not None:
            # run continues: the overwritten store joins the run-start epoch
            fin = (pending[2], state.store_run_start, pending[3])
        else:
            state.store_run_start = clock
        state.load_run_start = None
        state.pending = (thread, clock, slot, buffer)
        return None, fin
    # Exclusive: never shares an epoch, ends both kinds of run
    if pending is not None:
        fin = (pending[2], pending[1], pending[3])
        state.pending = None
    state.store_run_start = None
    state.load_run_start = None
    return clock, fin


def _apply_finalization(fin: tuple[list, int, ThreadRecordBuffer | None]) -> None:
    slot, epoch, buffer = fin
    if buffer is None:
        slot[_EPOCH] = epoch
        return
    with buffer.lock:
        slot[_EPOCH] = epoch


def stream_epochs(
    kinds: Sequence[AccessKind], clocks: Sequence[int] | None = None
) -> list[int]:
    """Drive the streaming assigner over one region, standalone.

    Feeds the given kind sequence through de_assign with the given clocks
    (default 0..n-1) and a trailing finalize, returning the epoch of each
    access in input order. This is the recorder's real streaming path, used
    to cross-check it against the whole-sequence reference.
    """
    state = RegionState(0, history_capacity=2)
    out: list = []
    for i, kind in enumerate(kinds):
        clock = i if clocks is None else clocks[i]
        if kind == _STORE:
            slot = [0, _STORE, clock, None]
            _epoch, fin = de_assign(state, clock, kind, 0, slot, None)
            out.append(slot)
        else:
            epoch, fin = de_assign(state, clock, kind, 0, None, None)
            out.append(epoch)
        if fin is not None:
            _apply_finalization(fin)
    if state.pending is not None:
        # run ended with a store pending: it is the run's last, own clock
        _apply_finalization((state.pending[2], state.pending[1], state.pending[3]))
        state.pending = None
    return [e if isinstance(e, int) else e[_EPOCH] for e in out]


class Recorder:
    """Record engine. One instance per recorded run."""

    def __init__(self, config: GateConfig, workload_digest: str = "") -> None:
        if config.mode is not Mode.RECORD:
            raise ConfigError("Recorder requires mode=Record")
        if config.trace_dir is None:
            raise ConfigError("record mode needs a trace directory")
        self.config = config
        self.workload_digest = workload_digest
        self.trace_dir = Path(config.trace_dir)
        try:
            self.trace_dir.mkdir(parents=True, exist_ok=True)
            probe = self.trace_dir / ".write_probe"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"trace dir {self.trace_dir} not writable: {exc}") from exc

        self._scheme = config.scheme
        self._per_region_clock = config.clock_scope is ClockScope.PER_REGION
        self._history_capacity = config.history_capacity
        self._global_lock = threading.Lock()
        self._global_clock = 0
        self._states: dict[int, RegionState] = {}
        self._states_lock = threading.Lock()
        self._buffers: dict[int, ThreadRecordBuffer] = {}
        self._finalized = False

        self._st_order: list[int] = []
        self._st_file = None
        if config.scheme is Scheme.ST:
            try:
                self._st_file = open(self.trace_dir / ORDER_FILE_NAME, "wb")
                self._st_file.write(header_bytes(Scheme.ST, config.clock_scope))
            except OSError as exc:
                raise RecordIoError(f"cannot open ST order file: {exc}") from exc

        self.gate_in = {
            Scheme.ST: self._st_gate_in,
            Scheme.DC: self._scoped_gate_in,
            Scheme.DE: self._scoped_gate_in,
        }[config.scheme]
        self.gate_out = {
            Scheme.ST: self._st_gate_out,
            Scheme.DC: self._dc_gate_out,
            Scheme.DE: self._de_gate_out,
        }[config.scheme]

    # -- thread/region registration

    def register_thread(self, tid: int) -> ThreadRecordBuffer:
        buf = ThreadRecordBuffer(tid)
        self._buffers[tid] = buf
        return buf

    def _state_for(self, region: int) -> RegionState:
        state = self._states.get(region)
        if state is None:
            with self._states_lock:
                state = self._states.get(region)
                if state is None:
                    state = RegionState(region, self._history_capacity)
                    self._states[region] = state
        return state

    # -- ST gates: body and order append both inside the one global lock

    def _st_gate_in(self, tls: ThreadRecordBuffer, region: int, kind: int) -> None:
        self._global_lock.acquire()

    def _st_gate_out(self, tls: ThreadRecordBuffer, region: int, kind: int, ok: bool) -> None:
        try:
            if ok:
                self._st_order.append(tls.tid)
                self._st_file.write(_TID.pack(tls.tid))
        except OSError as exc:
            raise RecordIoError(f"ST order append failed: {exc}") from exc
        finally:
            self._global_lock.release()

    # -- DC/DE gates: clock consumed in the lock, buffer append after unlock

    def _scoped_gate_in(self, tls: ThreadRecordBuffer, region: int, kind: int) -> None:
        state = self._state_for(region)
        tls.g_state = state
        (state.lock if self._per_region_clock else self._global_lock).acquire()

    def _dc_gate_out(self, tls: ThreadRecordBuffer, region: int, kind: int, ok: bool) -> None:
        state = tls.g_state
        if not ok:
            (state.lock if self._per_region_clock else self._global_lock).release()
            return
        if self._per_region_clock:
            clock = state.clock
            state.clock = clock + 1
            state.history.append((clock, kind))
            state.lock.release()
        else:
            clock = self._global_clock
            self._global_clock = clock + 1
            state.history.append((clock, kind))
            self._global_lock.release()
        tls.entries.append([region, kind, clock, clock])

    def _de_gate_out(self, tls: ThreadRecordBuffer, region: int, kind: int, ok: bool) -> None:
        state = tls.g_state
        lock = state.lock if self._per_region_clock else self._global_lock
        if not ok:
            lock.release()
            return
        if self._per_region_clock:
            clock = state.clock
            state.clock = clock + 1
        else:
            clock = self._global_clock
            self._global_clock = clock + 1
        if kind == _STORE:
            slot = [region, kind, clock, None]
            _epoch, fin = de_assign(state, clock, kind, tls.tid, slot, tls)
        else:
            slot = None
            epoch, fin = de_assign(state, clock, kind, tls.tid, None, None)
        if fin is not None:
            _apply_finalization(fin)
        state.history.append((clock, kind))
        lock.release()
        if slot is None:
            tls.entries.append([region, kind, clock, epoch])
        else:
            tls.entries.append(slot)

    # -- finalize

    def finalize_run(self) -> TraceSet:
        """Close out the run: settle pending stores, flush files, build the TraceSet.

        Must be called after all worker threads have finished gating (join).
        """
        if self._finalized:
            raise GateError("finalize_run called twice")
        for buf in self._buffers.values():
            if buf.in_gate:
                raise PendingInGate(f"thread {buf.tid} is still inside a gate")
        self._finalized = True
        for state in self._states.values():
            with state.lock:
                if state.pending is not None:
                    _apply_finalization(
                        (state.pending[2], state.pending[1], state.pending[3])
                    )
                    state.pending = None
                    state.store_run_start = None

        scheme = self._scheme
        scope = self.config.clock_scope
        if scheme is Scheme.ST:
            try:
                self._st_file.flush()
                self._st_file.close()
            except OSError as exc:
                raise RecordIoError(f"cannot flush ST order file: {exc}") from exc
            counts = Counter(self._st_order)
            manifest = TraceManifest(
                scheme,
                scope,
                len(self._buffers),
                {tid: counts.get(tid, 0) for tid in self._buffers},
                self.workload_digest,
            )
            write_manifest(self.trace_dir / MANIFEST_NAME, manifest)
            return TraceSet(manifest, st_order=list(self._st_order))

        per_thread: dict[int, list[RecordEntry]] = {}
        counts = {}
        for tid, buf in sorted(self._buffers.items()):
            entries = []
            for slot in buf.entries:
                region, kind, clock, epoch = slot
                if epoch is None:
                    raise GateError(
                        f"unfinalized placeholder left in thread {tid} (region {region})"
                    )
                entries.append(RecordEntry(region, _KINDS[kind], clock, epoch))
            write_thread_file(
                self.trace_dir / thread_file_name(tid), scheme, scope, entries
            )
            per_thread[tid] = entries
            counts[tid] = len(entries)
        manifest = TraceManifest(
            scheme, scope, len(self._buffers), counts, self.workload_digest
        )
        write_manifest(self.trace_dir / MANIFEST_NAME, manifest)
        return TraceSet(manifest, per_thread=per_thread)

    def abort(self, reason: str = "") -> None:
        """Recording never blocks indefinitely; nothing to cancel."""
