"""Trace inspection: statistics, deep validation, and log comparison.

Validation recomputes what the streaming recorder claims: clock contiguity
per scope, per-thread clock monotonicity, and (for DE) the per-region epoch
structure, rebuilt by running each region's clock-ordered kind sequence
through the whole-sequence reference assigner. A trace that passes validate
is one the recorder could have produced.

Comparison decides whether a replay's completion log is the recorded
behavior. Logs are (thread, region, kind) triples; each log item is mapped to
its trace entry through the thread's own ordered sequence, which replay never
reorders. The log is epoch-equivalent when every item had its epoch satisfied
by the completions before it, i.e. exactly the orders the replay gate admits.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .core import AccessKind, ClockScope, Scheme, TraceSet
from .errors import LengthMismatch
from .oracle import reference_epochs

LogItem = tuple[int, int, int]  # (thread, region, kind)


class CompareResult(Enum):
    EQUAL = "Equal"
    EPOCH_EQUIVALENT = "EpochEquivalent"
    DIVERGENT = "Divergent"


@dataclass
class TraceStats:
    """Aggregate epoch statistics of one trace."""

    total_entries: int = 0
    loads: int = 0
    stores: int = 0
    exclusives: int = 0
    epoch_count: int = 0
    histogram: dict[int, int] = field(default_factory=dict)
    parallel_ratio: float = 0.0
    group_key: str = "epoch"


def stats(trace: TraceSet) -> TraceStats:
    """Epoch-size histogram and access counts.

    Epoch groups are keyed by epoch value under a global clock (run starts
    are globally unique clocks) and by (region, epoch) under per-region
    clocks. ST traces carry no clock or kind data, so only the total is set.
    """
    if trace.st_order is not None:
        return TraceStats(total_entries=len(trace.st_order), group_key="none (ST)")
    assert trace.per_thread is not None
    per_region = trace.manifest.clock_scope is ClockScope.PER_REGION
    kind_counts = [0, 0, 0]
    groups: Counter = Counter()
    total = 0
    for entries in trace.per_thread.values():
        total += len(entries)
        for region, kind, _clock, epoch in entries:
            kind_counts[kind] += 1
            groups[(region, epoch) if per_region else epoch] += 1
    histogram = Counter(groups.values())
    epoch_count = len(groups)
    parallel = sum(n for size, n in histogram.items() if size >= 2)
    return TraceStats(
        total_entries=total,
        loads=kind_counts[0],
        stores=kind_counts[1],
        exclusives=kind_counts[2],
        epoch_count=epoch_count,
        histogram=dict(sorted(histogram.items())),
        parallel_ratio=(parallel / epoch_count) if epoch_count else 0.0,
        group_key="(region, epoch)" if per_region else "epoch",
    )


def validate(trace: TraceSet) -> list[str]:
    """Deep semantic checks; returns human-readable violations (empty = valid)."""
    v: list[str] = []
    m = trace.manifest
    if trace.st_order is not None:
        counts = Counter(trace.st_order)
        for tid in counts:
            if not 0 <= tid < m.thread_count:
                v.append(f"order file names thread {tid}, thread_count is {m.thread_count}")
        if {t: counts.get(t, 0) for t in range(m.thread_count)} != m.entry_counts:
            v.append("per-thread order counts disagree with the manifest")
        return v

    assert trace.per_thread is not None
    if sorted(trace.per_thread) != list(range(m.thread_count)):
        v.append("per-thread sequences do not cover threads 0..thread_count-1")
        return v
    per_region_scope = m.clock_scope is ClockScope.PER_REGION
    regions: dict[int, list] = {}
    for tid in range(m.thread_count):
        entries = trace.per_thread[tid]
        if len(entries) != m.entry_counts.get(tid, -1):
            v.append(
                f"thread {tid} holds {len(entries)} entries, "
                f"manifest says {m.entry_counts.get(tid)}"
            )
        last_global = -1
        last_by_region: dict[int, int] = {}
        for idx, (region, kind, clock, epoch) in enumerate(entries):
            if per_region_scope:
                if clock <= last_by_region.get(region, -1):
                    v.append(
                        f"thread {tid} entry {idx}: clock {clock} not increasing "
                        f"within region {region}"
                    )
                last_by_region[region] = clock
            else:
                if clock <= last_global:
                    v.append(f"thread {tid} entry {idx}: clock {clock} not increasing")
                last_global = clock
            if not 0 <= epoch <= clock:
                v.append(f"thread {tid} entry {idx}: epoch {epoch} outside [0, {clock}]")
            if kind == AccessKind.EXCLUSIVE and epoch != clock:
                v.append(
                    f"thread {tid} entry {idx}: Exclusive epoch {epoch} != clock {clock}"
                )
            if m.scheme is Scheme.DC and epoch != clock:
                v.append(f"thread {tid} entry {idx}: DC epoch {epoch} != clock {clock}")
            regions.setdefault(region, []).append((clock, kind, epoch))

    if per_region_scope:
        for region, accesses in regions.items():
            accesses.sort()
            if [c for c, _k, _e in accesses] != list(range(len(accesses))):
                v.append(f"region {region}: clocks are not contiguous from 0")
    else:
        all_clocks = sorted(c for accesses in regions.values() for c, _k, _e in accesses)
        if all_clocks != list(range(len(all_clocks))):
            v.append("clocks are not a contiguous range from 0")
        for accesses in regions.values():
            accesses.sort()

    if m.scheme is Scheme.DE:
        for region, accesses in sorted(regions.items()):
            epochs = [e for _c, _k, e in accesses]
            if any(b < a for a, b in zip(epochs, epochs[1:])):
                v.append(f"region {region}: epochs decrease along the clock order")
            expected = reference_epochs(
                [k for _c, k, _e in accesses], [c for c, _k, _e in accesses]
            )
            if epochs != expected:
                bad = next(i for i, (a, b) in enumerate(zip(epochs, expected)) if a != b)
                v.append(
                    f"region {region}: epoch structure breaks at clock "
                    f"{accesses[bad][0]} (stored {epochs[bad]}, recomputed {expected[bad]})"
                )
    return v


def compare(
    record_log: list[LogItem], replay_log: list[LogItem], trace: TraceSet
) -> CompareResult:
    """Classify a replay completion log against the recorded one.

    Equal: byte-for-byte the same order. EpochEquivalent: both logs walk each
    thread's recorded sequence in order, and every replayed access had its
    epoch satisfied by the completions that preceded it (the only freedom the
    DE gate grants; under DC epochs are singleton, so any difference is
    Divergent). Raises LengthMismatch when the logs disagree in length.
    """
    if len(record_log) != len(replay_log):
        raise LengthMismatch(
            f"completion logs differ in length: {len(record_log)} vs {len(replay_log)}"
        )
    if record_log == replay_log:
        return CompareResult.EQUAL
    if trace.st_order is not None:
        return CompareResult.DIVERGENT
    assert trace.per_thread is not None
    per_thread = trace.per_thread

    def follows_thread_order(log: list[LogItem]) -> bool:
        pos = dict.fromkeys(per_thread, 0)
        for tid, region, kind in log:
            entries = per_thread.get(tid)
            if entries is None:
                return False
            p = pos[tid]
            if p >= len(entries):
                return False
            entry = entries[p]
            if entry[0] != region or entry[1] != kind:
                return False
            pos[tid] = p + 1
        return all(pos[t] == len(per_thread[t]) for t in per_thread)

    if not follows_thread_order(record_log) or not follows_thread_order(replay_log):
        return CompareResult.DIVERGENT

    pos = dict.fromkeys(per_thread, 0)
    if trace.manifest.clock_scope is ClockScope.PER_REGION:
        completed: dict[int, int] = {}
        for tid, region, _kind in replay_log:
            entry = per_thread[tid][pos[tid]]
            pos[tid] += 1
            done = completed.get(region, 0)
            if entry[3] > done:
                return CompareResult.DIVERGENT
            completed[region] = done + 1
    else:
        done = 0
        for tid, _region, _kind in replay_log:
            entry = per_thread[tid][pos[tid]]
            pos[tid] += 1
            if entry[3] > done:
                return CompareResult.DIVERGENT
            done += 1
    return CompareResult.EPOCH_EQUIVALENT


def stats_csv(s: TraceStats) -> str:
    lines = ["size,count"]
    lines.extend(f"{size},{count}" for size, count in sorted(s.histogram.items()))
    return "\n".join(lines) + "\n"
