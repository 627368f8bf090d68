"""Shared helpers: scripted multi-thread drivers with a pinned access order.

run_script executes a list of (worker, region, kind) steps from real worker
threads. In scripted mode the workers take turns, so the global gate order
equals the list order exactly and recorded clocks are the step indices. In
free mode each worker runs only its own steps back to back and the gate alone
decides the interleaving, which is what a replay needs.

Bodies act on one integer cell per region: a store writes step_index + 1, a
load observes, an exclusive observes then adds one. That makes every write
distinct and every reorder visible.
"""

from __future__ import annotations

import threading
from collections import defaultdict

from rrgate.core import AccessKind, ClockScope, Mode, Scheme
from rrgate.errors import ReplayAborted
from rrgate.gate import Runtime, config_from_env

L = AccessKind.LOAD
S = AccessKind.STORE
E = AccessKind.EXCLUSIVE

_JOIN_BUDGET_S = 60.0


def run_script(runtime, steps, threads, scripted_order=True):
    """Run the steps; returns (observations, finals, completions).

    observations maps step index to the value a Load or Exclusive saw, finals
    maps region to its last cell value, completions is the gate completion
    order as (worker, region, kind) tuples.
    """
    cells: dict[int, int] = defaultdict(int)
    observations: dict[int, int] = {}
    completions: list[tuple[int, int, int]] = []
    turn = [0]
    cond = threading.Condition()
    broken: list[BaseException] = []
    reg_turn = [threading.Event() for _ in range(threads + 1)]
    reg_turn[0].set()

    def make_body(idx: int, tid: int, region: int, kind: AccessKind):
        def body():
            if kind is S:
                cells[region] = idx + 1
            elif kind is L:
                observations[idx] = cells[region]
            else:
                observations[idx] = cells[region]
                cells[region] += 1
            completions.append((tid, region, int(kind)))

        return body

    def thread_main(w: int) -> None:
        try:
            reg_turn[w].wait()
            tid = runtime.register_thread()
            reg_turn[w + 1].set()
            for idx, (worker, region, kind) in enumerate(steps):
                if worker != w:
                    continue
                if scripted_order:
                    with cond:
                        while turn[0] != idx:
                            if broken:
                                raise RuntimeError("script driver broke") from broken[0]
                            cond.wait(0.05)
                runtime.guarded(region, int(kind), make_body(idx, tid, region, kind))
                if scripted_order:
                    with cond:
                        turn[0] += 1
                        cond.notify_all()
        except BaseException as exc:  # noqa: BLE001 - re-raised after join
            with cond:
                broken.append(exc)
                cond.notify_all()
            reg_turn[w + 1].set()
            runtime.abort(f"scripted worker {w} failed: {exc}")

    workers = [
        threading.Thread(target=thread_main, args=(w,), daemon=True)
        for w in range(threads)
    ]
    for t in workers:
        t.start()
    for t in workers:
        t.join(_JOIN_BUDGET_S)
        if t.is_alive():
            runtime.abort("test join budget exceeded")
            for u in workers:
                u.join(5.0)
            raise TimeoutError("scripted run did not finish inside the join budget")
    if broken:
        primary = next(
            (e for e in broken if not isinstance(e, ReplayAborted)), broken[0]
        )
        raise primary
    return observations, dict(cells), completions


def make_config(mode, scheme, tmp_path, scope=ClockScope.GLOBAL, **kw):
    """A GateConfig from explicit values only; ambient RR_* vars are ignored."""
    return config_from_env(
        env={}, mode=mode, scheme=scheme, clock_scope=scope, trace_dir=tmp_path, **kw
    )


def record_script(tmp_path, steps, threads, scheme, scope=ClockScope.GLOBAL, digest=""):
    """Record the script at tmp_path; returns (trace, observations, finals, completions)."""
    runtime = Runtime(
        make_config(Mode.RECORD, scheme, tmp_path, scope), workload_digest=digest
    )
    obs, finals, comps = run_script(runtime, steps, threads)
    trace = runtime.finalize()
    return trace, obs, finals, comps


def replay_script(tmp_path, steps, threads, scheme, scope=ClockScope.GLOBAL):
    """Replay the script against the trace at tmp_path (gate decides order)."""
    runtime = Runtime(make_config(Mode.REPLAY, scheme, tmp_path, scope))
    obs, finals, comps = run_script(runtime, steps, threads, scripted_order=False)
    runtime.finalize()
    return obs, finals, comps


# the seven-access scenario used across the suite: three threads, one region,
# kinds L L L S S S L issued round-robin, so thread 0 owns steps 0, 3, 6
TABLE_STEPS = [
    (0, 0, L),
    (1, 0, L),
    (2, 0, L),
    (0, 0, S),
    (1, 0, S),
    (2, 0, S),
    (0, 0, L),
]
