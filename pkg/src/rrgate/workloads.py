"""Canned multi-threaded workloads driven through the gate.

Each workload wraps every shared-memory access in runtime.guarded and logs
enough observables to decide whether a replay reproduced the recorded run:
per-thread loaded values, final cell values, and a global completion log.
Loops are value-driven (never clock- or sleep-driven), so a replayed run
performs exactly the recorded number of gated accesses.

Workloads:

  reduction          private per-thread sums, one guarded Exclusive merge each
  critical           every iteration increments a shared total (Exclusive)
  atomic             same shape, modeling a fine-grained atomic update
  data_race          guarded Load of a cell, then guarded Store of value+1
  producer_consumer  producers store an increasing flag; consumers spin on
                     guarded Loads until each milestone value is reached

An optional perturbation seed injects bounded pre-gate delays (at most 200
microseconds, on roughly one gate in 32, pseudo-random per thread/iteration/
seed) to diversify recorded interleavings across seeds.
"""

from __future__ import annotations

import hashlib
import random
import struct
import threading
import time
from array import array
from dataclasses import dataclass, field
from itertools import chain
from pathlib import Path

from .core import AccessKind
from .errors import ConfigError, GateError, ReplayAborted, WatchdogTimeout
from .gate import Runtime

_L = int(AccessKind.LOAD)
_S = int(AccessKind.STORE)
_E = int(AccessKind.EXCLUSIVE)

_DELAY_RATE = 1 / 32
_DELAY_MAX_S = 200e-6
_RETRY_PAUSE_S = 20e-6

WORKLOAD_NAMES = ("reduction", "critical", "atomic", "data_race", "producer_consumer")


@dataclass
class WorkloadSpec:
    """What to run: workload name, thread count, per-thread iterations, seed."""

    name: str
    threads: int
    iterations: int
    perturb_seed: int | None = None

    def __post_init__(self) -> None:
        if self.name not in WORKLOAD_NAMES:
            raise ConfigError(
                f"unknown workload {self.name!r}; choose from {', '.join(WORKLOAD_NAMES)}"
            )
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")


@dataclass
class WorkloadReport:
    """Observables of one run, sufficient to compare record against replay."""

    workload: str
    threads: int
    iterations: int
    perturb_seed: int | None
    final_values: dict[int, int]
    observed_loads: dict[int, list[tuple[int, int]]]
    completion_log: list[tuple[int, int, int]]
    wall_time: float = 0.0


_PAIR = struct.Struct("<QQ")


def digest(report: WorkloadReport) -> str:
    """Deterministic hash over final values and observed loads.

    Completion order and wall time are excluded: two runs are behaviorally
    equal when every load saw the same value and memory ended up the same.
    """
    h = hashlib.sha256()
    for region in sorted(report.final_values):
        h.update(f"F{region}={report.final_values[region]};".encode())
    for tid in sorted(report.observed_loads):
        h.update(f"T{tid}:".encode())
        pairs = report.observed_loads[tid]
        h.update(array("Q", chain.from_iterable(pairs)).tobytes())
    return h.hexdigest()


def spec_digest(name: str, threads: int, iterations: int) -> str:
    """Stable identity of a workload invocation, stored in the trace manifest.

    The perturbation seed is deliberately excluded: replay may legally use a
    different seed, since gating (not timing) enforces the recorded order.
    """
    return hashlib.sha256(f"{name}/{threads}/{iterations}".encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# workload bodies
#
# Each builder returns (worker, finals) where worker(tid, pause, my_loads,
# log_append) runs one thread's accesses and finals() reads the final cell
# values after all threads joined.


def _build_reduction(spec: WorkloadSpec, rt: Runtime):
    region = rt.registry.register("reduction.total")
    cell = [0]

    def worker(tid, pause, my_loads, log_append):
        local = 0
        for i in range(spec.iterations):
            local += i
        if pause is not None:
            pause()

        def merge():
            cell[0] += local
            log_append((tid, region, _E))

        rt.guarded(region, _E, merge)

    return worker, lambda: {region: cell[0]}


def _build_counter(label: str):
    def build(spec: WorkloadSpec, rt: Runtime):
        region = rt.registry.register(label)
        cell = [0]
        guarded = rt.guarded

        def worker(tid, pause, my_loads, log_append):
            def bump():
                cell[0] += 1
                log_append((tid, region, _E))

            if pause is None:
                for _ in range(spec.iterations):
                    guarded(region, _E, bump)
            else:
                for _ in range(spec.iterations):
                    pause()
                    guarded(region, _E, bump)

        return worker, lambda: {region: cell[0]}

    return build


def _build_data_race(spec: WorkloadSpec, rt: Runtime):
    region = rt.registry.register("data_race.cell")
    cell = [0]
    guarded = rt.guarded

    def worker(tid, pause, my_loads, log_append):
        loads_append = my_loads.append
        gate_idx = 0
        seen = 0

        def racy_load():
            nonlocal seen
            seen = cell[0]
            loads_append((gate_idx, seen))
            log_append((tid, region, _L))

        def racy_store():
            cell[0] = seen + 1
            log_append((tid, region, _S))

        for _ in range(spec.iterations):
            if pause is not None:
                pause()
            guarded(region, _L, racy_load)
            gate_idx += 1
            guarded(region, _S, racy_store)
            gate_idx += 1

    return worker, lambda: {region: cell[0]}


def _build_producer_consumer(spec: WorkloadSpec, rt: Runtime):
    region = rt.registry.register("producer_consumer.flag")
    flag = [0]
    guarded = rt.guarded
    producers = max(1, spec.threads // 2)

    def worker(tid, pause, my_loads, log_append):
        if tid < producers:
            value = 0

            def publish():
                flag[0] = value
                log_append((tid, region, _S))

            for value in range(1, spec.iterations + 1):
                if pause is not None:
                    pause()
                guarded(region, _S, publish)
        else:
            loads_append = my_loads.append
            gate_idx = 0
            seen = 0

            def poll():
                nonlocal seen
                seen = flag[0]
                loads_append((gate_idx, seen))
                log_append((tid, region, _L))

            milestone = 1
            while milestone <= spec.iterations:
                if pause is not None:
                    pause()
                guarded(region, _L, poll)
                gate_idx += 1
                if seen >= milestone:
                    milestone += 1
                else:
                    time.sleep(_RETRY_PAUSE_S)

    return worker, lambda: {region: flag[0]}


_BUILDERS = {
    "reduction": _build_reduction,
    "critical": _build_counter("critical.total"),
    "atomic": _build_counter("atomic.total"),
    "data_race": _build_data_race,
    "producer_consumer": _build_producer_consumer,
}


# --------------------------------------------------------------------------
# runner


def _make_pause(seed: int, tid: int):
    rng = random.Random(f"{seed}:{tid}")
    rand = rng.random
    sleep = time.sleep
    rate = _DELAY_RATE
    scale = _DELAY_MAX_S

    def pause():
        if rand() < rate:
            sleep(rand() * scale)

    return pause


def run_workload(
    spec: WorkloadSpec, runtime: Runtime, watchdog_s: float | None = None
) -> WorkloadReport:
    """Run one workload under the runtime's gate and collect its observables.

    Threads register in spawn order, so thread ids are identical between a
    recording run and its replays. A watchdog deadline, if given, aborts a
    stuck replay (spinning gates cancel) and raises WatchdogTimeout.
    """
    worker, finals = _BUILDERS[spec.name](spec, runtime)
    n = spec.threads
    loads: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    completion_log: list[tuple[int, int, int]] = []
    log_append = completion_log.append
    reg_turn = [threading.Event() for _ in range(n + 1)]
    reg_turn[0].set()
    start_barrier = threading.Barrier(n)
    errors: list[BaseException] = []
    errors_lock = threading.Lock()

    def thread_main(index: int) -> None:
        try:
            reg_turn[index].wait()
            tid = runtime.register_thread()
            reg_turn[index + 1].set()
            pause = (
                _make_pause(spec.perturb_seed, tid)
                if spec.perturb_seed is not None
                else None
            )
            start_barrier.wait()
            worker(tid, pause, loads[tid], log_append)
        except BaseException as exc:  # noqa: BLE001 - propagated after join
            with errors_lock:
                errors.append(exc)
            runtime.abort(f"worker thread {index} failed: {exc}")
            reg_turn[index + 1].set()
            start_barrier.abort()

    threads = [
        threading.Thread(target=thread_main, args=(i,), daemon=True, name=f"w{i}")
        for i in range(n)
    ]
    started = time.perf_counter()
    for t in threads:
        t.start()
    deadline = None if watchdog_s is None else time.monotonic() + watchdog_s
    timed_out = False
    for t in threads:
        if deadline is None:
            t.join()
        else:
            t.join(max(0.0, deadline - time.monotonic()))
            if t.is_alive():
                timed_out = True
                break
    if timed_out:
        runtime.abort(f"watchdog expired after {watchdog_s}s")
        for t in threads:
            t.join(timeout=5.0)
        raise WatchdogTimeout(
            f"{spec.name} did not finish within {watchdog_s}s; run aborted"
        )
    wall = time.perf_counter() - started

    if errors:
        primary = next(
            (e for e in errors if not isinstance(e, ReplayAborted)), errors[0]
        )
        if isinstance(primary, threading.BrokenBarrierError):
            others = [e for e in errors if not isinstance(e, threading.BrokenBarrierError)]
            if others:
                primary = others[0]
        raise primary

    return WorkloadReport(
        workload=spec.name,
        threads=spec.threads,
        iterations=spec.iterations,
        perturb_seed=spec.perturb_seed,
        final_values=finals(),
        observed_loads=loads,
        completion_log=completion_log,
        wall_time=wall,
    )


# --------------------------------------------------------------------------
# report serialization (line-oriented text, used by the CLI)


def write_report(report: WorkloadReport, path: Path) -> None:
    lines = [
        f"workload={report.workload}",
        f"threads={report.threads}",
        f"iterations={report.iterations}",
        f"perturb_seed={'' if report.perturb_seed is None else report.perturb_seed}",
        f"wall_time={report.wall_time:.6f}",
    ]
    for region in sorted(report.final_values):
        lines.append(f"final.{region}={report.final_values[region]}")
    for tid in sorted(report.observed_loads):
        pairs = ",".join(f"{i}:{v}" for i, v in report.observed_loads[tid])
        lines.append(f"load.{tid}={pairs}")
    lines.extend(
        f"completion={tid},{region},{kind}" for tid, region, kind in report.completion_log
    )
    path.write_text("\n".join(lines) + "\n")


def read_report(path: Path) -> WorkloadReport:
    fields: dict[str, str] = {}
    finals: dict[int, int] = {}
    loads: dict[int, list[tuple[int, int]]] = {}
    log: list[tuple[int, int, int]] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise GateError(f"cannot read workload report {path}: {exc}") from exc
    for line in text.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "completion":
            tid, region, kind = value.split(",")
            log.append((int(tid), int(region), int(kind)))
        elif key.startswith("final."):
            finals[int(key[6:])] = int(value)
        elif key.startswith("load."):
            pairs = []
            if value:
                for item in value.split(","):
                    i, _, v = item.partition(":")
                    pairs.append((int(i), int(v)))
            loads[int(key[5:])] = pairs
        else:
            fields[key] = value
    return WorkloadReport(
        workload=fields["workload"],
        threads=int(fields["threads"]),
        iterations=int(fields["iterations"]),
        perturb_seed=int(fields["perturb_seed"]) if fields["perturb_seed"] else None,
        final_values=finals,
        observed_loads=loads,
        completion_log=log,
        wall_time=float(fields["wall_time"]),
    )
