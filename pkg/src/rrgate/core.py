"""Shared types and the on-disk trace format.

A trace directory holds:

  manifest.txt      line-oriented ``key=value`` run metadata
  order.rr          ST scheme: one u32 thread id per gated access, global order
  thread_<i>.rr     DC/DE schemes: the per-thread entry sequence for thread i

Binary files start with a 16-byte header: an 8-byte magic, a u32 format
version, one byte each for scheme and clock scope, and 2 bytes of zero pad.
Entries are fixed 17-byte little-endian records::

    region : u32
    kind   : u8   (0 = Load, 1 = Store, 2 = Exclusive)
    clock  : u64
    xc     : u32  (clock - epoch, so epoch <= clock holds structurally)

Storing the epoch as a backward distance keeps the common case (epoch equal
to clock) an all-zero field and makes a negative epoch unrepresentable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

from .errors import ConfigError, MalformedEntry, MalformedTrace, RecordIoError

TRACE_MAGIC = b"REOMPRR\0"
FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.txt"
ORDER_FILE_NAME = "order.rr"

_HEADER = struct.Struct("<8sIBBH")
_ENTRY = struct.Struct("<IBQI")
_TID = struct.Struct("<I")

HEADER_SIZE = _HEADER.size
ENTRY_SIZE = _ENTRY.size

RegionId = int
ThreadId = int
Clock = int
Epoch = int


class AccessKind(IntEnum):
    """Kind of a gated shared-memory access."""

    LOAD = 0
    STORE = 1
    EXCLUSIVE = 2


class Scheme(IntEnum):
    """Order-recording scheme."""

    ST = 0
    DC = 1
    DE = 2


class ClockScope(IntEnum):
    """Domain of the logical clock: one shared counter, or one per region."""

    GLOBAL = 0
    PER_REGION = 1


class Mode(IntEnum):
    NOOP = 0
    RECORD = 1
    REPLAY = 2


class SpinPolicy(IntEnum):
    """How replay gates wait: burn the CPU, or yield between polls."""

    BUSY = 0
    YIELDING = 1


_SCOPE_TEXT = {ClockScope.GLOBAL: "Global", ClockScope.PER_REGION: "PerRegion"}
_TEXT_SCOPE = {v: k for k, v in _SCOPE_TEXT.items()}


def scope_text(scope: ClockScope) -> str:
    return _SCOPE_TEXT[scope]


class RecordEntry(NamedTuple):
    """One recorded access: where, what, when, and its replay epoch."""

    region: RegionId
    kind: AccessKind
    clock: Clock
    epoch: Epoch


@dataclass
class GateConfig:
    """Runtime configuration for the gate.

    history_capacity bounds the per-region debug ring buffer; it never affects
    epoch assignment, which needs only the run markers and the pending slot.
    """

    mode: Mode = Mode.NOOP
    scheme: Scheme = Scheme.DE
    clock_scope: ClockScope = ClockScope.GLOBAL
    trace_dir: Path | None = None
    spin_policy: SpinPolicy = SpinPolicy.YIELDING
    history_capacity: int = 64

    def __post_init__(self) -> None:
        if self.history_capacity < 2:
            raise ConfigError(
                f"history_capacity must be >= 2, got {self.history_capacity}"
            )
        if self.trace_dir is not None:
            self.trace_dir = Path(self.trace_dir)


@dataclass
class TraceManifest:
    """Run metadata stored next to the trace files."""

    scheme: Scheme
    clock_scope: ClockScope
    thread_count: int
    entry_counts: dict[ThreadId, int] = field(default_factory=dict)
    workload_digest: str = ""
    format_version: int = FORMAT_VERSION


@dataclass
class TraceSet:
    """A fully loaded (or freshly recorded) trace.

    per_thread is populated for DC/DE, st_order for ST; the other is None.
    """

    manifest: TraceManifest
    per_thread: dict[ThreadId, list[RecordEntry]] | None = None
    st_order: list[ThreadId] | None = None

    def total_entries(self) -> int:
        if self.st_order is not None:
            return len(self.st_order)
        assert self.per_thread is not None
        return sum(len(seq) for seq in self.per_thread.values())


# --------------------------------------------------------------------------
# entry and header codecs


def encode_entry(entry: RecordEntry) -> bytes:
    """Pack one entry into its 17-byte wire form.

    Raises MalformedEntry if the entry violates its invariants (unknown kind,
    epoch above clock, or a field out of range for its wire width).
    """
    region, kind, clock, epoch = entry
    xc = clock - epoch
    if xc < 0:
        raise MalformedEntry(f"epoch {epoch} exceeds clock {clock}")
    if not 0 <= kind <= 2:
        raise MalformedEntry(f"unknown access kind {kind}")
    try:
        return _ENTRY.pack(region, kind, clock, xc)
    except struct.error as exc:
        raise MalformedEntry(f"entry field out of range: {entry}") from exc


def decode_entry(buf: bytes, offset: int = 0) -> RecordEntry:
    """Unpack one entry; raises MalformedEntry on truncation or bad fields."""
    try:
        region, kind, clock, xc = _ENTRY.unpack_from(buf, offset)
    except struct.error as exc:
        raise MalformedEntry("truncated entry") from exc
    if kind > 2:
        raise MalformedEntry(f"unknown access kind byte {kind}")
    epoch = clock - xc
    if epoch < 0:
        raise MalformedEntry(f"negative epoch: clock {clock}, xc {xc}")
    return RecordEntry(region, AccessKind(kind), clock, epoch)


def header_bytes(scheme: Scheme, scope: ClockScope) -> bytes:
    return _HEADER.pack(TRACE_MAGIC, FORMAT_VERSION, scheme, scope, 0)


def parse_header(buf: bytes, path: Path) -> tuple[Scheme, ClockScope]:
    if len(buf) < HEADER_SIZE:
        raise MalformedTrace(f"{path}: truncated header")
    magic, version, scheme_b, scope_b, _pad = _HEADER.unpack_from(buf, 0)
    if magic != TRACE_MAGIC:
        raise MalformedTrace(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedTrace(f"{path}: unsupported format version {version}")
    try:
        return Scheme(scheme_b), ClockScope(scope_b)
    except ValueError as exc:
        raise MalformedTrace(f"{path}: bad scheme/scope bytes") from exc


# --------------------------------------------------------------------------
# file helpers


def thread_file_name(tid: ThreadId) -> str:
    return f"thread_{tid}.rr"


def write_thread_file(
    path: Path, scheme: Scheme, scope: ClockScope, entries: list[RecordEntry]
) -> None:
    buf = bytearray(header_bytes(scheme, scope))
    pack = _ENTRY.pack
    try:
        for region, kind, clock, epoch in entries:
            xc = clock - epoch
            if xc < 0:
                raise MalformedEntry(f"epoch {epoch} exceeds clock {clock}")
            buf += pack(region, kind, clock, xc)
        path.write_bytes(buf)
    except OSError as exc:
        raise RecordIoError(f"cannot write {path}: {exc}") from exc


def read_thread_file(path: Path, scheme: Scheme, scope: ClockScope) -> list[RecordEntry]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MalformedTrace(f"cannot read {path}: {exc}") from exc
    file_scheme, file_scope = parse_header(raw, path)
    if file_scheme != scheme or file_scope != scope:
        raise MalformedTrace(
            f"{path}: header says {file_scheme.name}/{scope_text(file_scope)}, "
            f"manifest says {scheme.name}/{scope_text(scope)}"
        )
    body = len(raw) - HEADER_SIZE
    if body % ENTRY_SIZE:
        raise MalformedTrace(f"{path}: {body} payload bytes is not a whole entry count")
    entries: list[RecordEntry] = []
    append = entries.append
    try:
        for region, kind, clock, xc in _ENTRY.iter_unpack(raw[HEADER_SIZE:]):
            if kind > 2:
                raise MalformedEntry(f"unknown access kind byte {kind}")
            epoch = clock - xc
            if epoch < 0:
                raise MalformedEntry(f"negative epoch: clock {clock}, xc {xc}")
            append(RecordEntry(region, AccessKind(kind), clock, epoch))
    except MalformedEntry as exc:
        raise MalformedTrace(f"{path}: {exc}") from exc
    return entries


def write_order_file(path: Path, scope: ClockScope, order: list[ThreadId]) -> None:
    buf = bytearray(header_bytes(Scheme.ST, scope))
    pack = _TID.pack
    try:
        for tid in order:
            buf += pack(tid)
        path.write_bytes(buf)
    except OSError as exc:
        raise RecordIoError(f"cannot write {path}: {exc}") from exc


def read_order_file(path: Path, scope: ClockScope) -> list[ThreadId]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MalformedTrace(f"cannot read {path}: {exc}") from exc
    file_scheme, file_scope = parse_header(raw, path)
    if file_scheme != Scheme.ST or file_scope != scope:
        raise MalformedTrace(f"{path}: header does not match an ST manifest")
    body = len(raw) - HEADER_SIZE
    if body % _TID.size:
        raise MalformedTrace(f"{path}: {body} payload bytes is not a whole id count")
    return [tid for (tid,) in _TID.iter_unpack(raw[HEADER_SIZE:])]


# --------------------------------------------------------------------------
# manifest


def write_manifest(path: Path, manifest: TraceManifest) -> None:
    lines = [
        f"scheme={manifest.scheme.name}",
        f"clock_scope={scope_text(manifest.clock_scope)}",
        f"thread_count={manifest.thread_count}",
    ]
    for tid in sorted(manifest.entry_counts):
        lines.append(f"entry_count.{tid}={manifest.entry_counts[tid]}")
    lines.append(f"workload_digest={manifest.workload_digest}")
    lines.append(f"format_version={manifest.format_version}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise RecordIoError(f"cannot write {path}: {exc}") from exc


def parse_manifest(path: Path) -> TraceManifest:
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedTrace(f"cannot read {path}: {exc}") from exc
    fields: dict[str, str] = {}
    counts: dict[int, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise MalformedTrace(f"{path}:{lineno}: expected key=value, got {line!r}")
        if key.startswith("entry_count."):
            try:
                counts[int(key.split(".", 1)[1])] = int(value)
            except ValueError as exc:
                raise MalformedTrace(f"{path}:{lineno}: bad entry count line") from exc
        else:
            fields[key] = value
    try:
        scheme = Scheme[fields["scheme"]]
        scope = _TEXT_SCOPE[fields["clock_scope"]]
        thread_count = int(fields["thread_count"])
        digest = fields["workload_digest"]
        version = int(fields["format_version"])
    except (KeyError, ValueError) as exc:
        raise MalformedTrace(f"{path}: missing or invalid manifest field: {exc}") from exc
    if version != FORMAT_VERSION:
        raise MalformedTrace(f"{path}: unsupported format version {version}")
    if thread_count < 0:
        raise MalformedTrace(f"{path}: negative thread_count")
    if sorted(counts) != list(range(thread_count)):
        raise MalformedTrace(f"{path}: entry_count lines do not cover threads 0..{thread_count - 1}")
    if any(n < 0 for n in counts.values()):
        raise MalformedTrace(f"{path}: negative entry count")
    return TraceManifest(scheme, scope, thread_count, counts, digest, version)


# --------------------------------------------------------------------------
# whole-trace read/write


def write_trace_set(trace: TraceSet, trace_dir: Path) -> None:
    """Write a complete trace directory (manifest last)."""
    trace_dir = Path(trace_dir)
    try:
        trace_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RecordIoError(f"cannot create {trace_dir}: {exc}") from exc
    m = trace.manifest
    if m.scheme is Scheme.ST:
        assert trace.st_order is not None
        write_order_file(trace_dir / ORDER_FILE_NAME, m.clock_scope, trace.st_order)
    else:
        assert trace.per_thread is not None
        for tid in range(m.thread_count):
            write_thread_file(
                trace_dir / thread_file_name(tid),
                m.scheme,
                m.clock_scope,
                trace.per_thread.get(tid, []),
            )
    write_manifest(trace_dir / MANIFEST_NAME, m)


def read_trace_set(trace_dir: Path) -> TraceSet:
    """Load and structurally validate a trace directory.

    Checks headers, entry decoding, and manifest/file count agreement; deeper
    semantic checks (clock contiguity, epoch structure) live in the analyzer.
    """
    trace_dir = Path(trace_dir)
    manifest = parse_manifest(trace_dir / MANIFEST_NAME)
    if manifest.scheme is Scheme.ST:
        order = read_order_file(trace_dir / ORDER_FILE_NAME, manifest.clock_scope)
        if len(order) != sum(manifest.entry_counts.values()):
            raise MalformedTrace(
                f"{trace_dir}: order file holds {len(order)} ids, "
                f"manifest counts sum to {sum(manifest.entry_counts.values())}"
            )
        per_tid: dict[int, int] = dict.fromkeys(range(manifest.thread_count), 0)
        for tid in order:
            if tid >= manifest.thread_count:
                raise MalformedTrace(f"{trace_dir}: thread id {tid} out of range")
            per_tid[tid] += 1
        if per_tid != manifest.entry_counts:
            raise MalformedTrace(f"{trace_dir}: per-thread id counts disagree with manifest")
        return TraceSet(manifest, st_order=order)
    per_thread: dict[int, list[RecordEntry]] = {}
    for tid in range(manifest.thread_count):
        entries = read_thread_file(
            trace_dir / thread_file_name(tid), manifest.scheme, manifest.clock_scope
        )
        if len(entries) != manifest.entry_counts[tid]:
            raise MalformedTrace(
                f"{trace_dir}: thread {tid} holds {len(entries)} entries, "
                f"manifest says {manifest.entry_counts[tid]}"
            )
        per_thread[tid] = entries
    return TraceSet(manifest, per_thread=per_thread)
