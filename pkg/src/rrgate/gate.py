"""The gate runtime: the one API workloads touch.

A Runtime is built from a GateConfig (or the RR_* environment variables),
threads register themselves once, and every shared-memory access runs as
``runtime.guarded(region, kind, body)`` or inside ``with runtime.gate(...)``.
In NoOp mode the gate adds nothing; in Record mode it logs the access order
under the configured scheme; in Replay mode it blocks until the recorded
order admits the access. The gate never touches application memory itself:
whatever the body does is one guarded access, and picking that granularity
is the caller's job.

Environment variables (defaults when no explicit config is given):

  RR_MODE         noop | record | replay
  RR_SCHEME       st | dc | de
  RR_DIR          trace directory
  RR_CLOCK_SCOPE  global | region
  RR_SPIN         busy | yield
"""

from __future__ import annotations

import os
import zlib
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator, Mapping

from .core import ClockScope, GateConfig, Mode, Scheme, SpinPolicy, TraceSet
from .errors import (
    ConfigError,
    DoubleRegistration,
    GateError,
    NestedGateError,
    PendingInGate,
    UnregisteredThread,
)
from .recorder import Recorder
from .replayer import Replayer

import threading

_MODES = {"noop": Mode.NOOP, "record": Mode.RECORD, "replay": Mode.REPLAY}
_SCHEMES = {"st": Scheme.ST, "dc": Scheme.DC, "de": Scheme.DE}
_SCOPES = {"global": ClockScope.GLOBAL, "region": ClockScope.PER_REGION}
_SPINS = {"busy": SpinPolicy.BUSY, "yield": SpinPolicy.YIELDING}


def _pick(env: Mapping[str, str], name: str, table: dict, default):
    raw = env.get(name)
    if raw is None or raw == "":
        return default
    try:
        return table[raw.strip().lower()]
    except KeyError:
        raise ConfigError(
            f"{name}={raw!r}: expected one of {', '.join(sorted(table))}"
        ) from None


def config_from_env(
    env: Mapping[str, str] | None = None,
    *,
    mode: Mode | None = None,
    scheme: Scheme | None = None,
    clock_scope: ClockScope | None = None,
    trace_dir: Path | str | None = None,
    spin_policy: SpinPolicy | None = None,
    history_capacity: int | None = None,
) -> GateConfig:
    """Build a GateConfig from RR_* variables; keyword overrides win."""
    if env is None:
        env = os.environ
    dir_raw = env.get("RR_DIR") or None
    return GateConfig(
        mode=mode if mode is not None else _pick(env, "RR_MODE", _MODES, Mode.NOOP),
        scheme=scheme
        if scheme is not None
        else _pick(env, "RR_SCHEME", _SCHEMES, Scheme.DE),
        clock_scope=clock_scope
        if clock_scope is not None
        else _pick(env, "RR_CLOCK_SCOPE", _SCOPES, ClockScope.GLOBAL),
        trace_dir=Path(trace_dir) if trace_dir is not None else (
            Path(dir_raw) if dir_raw else None
        ),
        spin_policy=spin_policy
        if spin_policy is not None
        else _pick(env, "RR_SPIN", _SPINS, SpinPolicy.YIELDING),
        history_capacity=history_capacity if history_capacity is not None else 64,
    )


class RegionRegistry:
    """Maps stable region labels to region ids.

    register() hands out dense ids in first-registration order and is
    idempotent per label. register_hashed() instead derives a stable 32-bit
    id from the label (the shape used when ids come from hashed call sites);
    colliding labels are rejected. Ids must be registered the same way in the
    recording and replaying process, so region identity survives across runs.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_label: dict[str, int] = {}
        self._label_of: dict[int, str] = {}

    def register(self, label: str) -> int:
        with self._lock:
            rid = self._by_label.get(label)
            if rid is None:
                rid = len(self._by_label)
                if rid in self._label_of:
                    raise ConfigError(
                        f"dense id {rid} already taken by hashed label "
                        f"{self._label_of[rid]!r}; do not mix id styles"
                    )
                self._by_label[label] = rid
                self._label_of[rid] = label
            return rid

    def register_hashed(self, label: str) -> int:
        rid = zlib.crc32(label.encode()) & 0xFFFFFFFF
        with self._lock:
            existing = self._label_of.get(rid)
            if existing is not None and existing != label:
                raise ConfigError(
                    f"hash collision: {label!r} and {existing!r} both map to {rid}"
                )
            self._by_label[label] = rid
            self._label_of[rid] = label
            return rid

    def label_of(self, region: int) -> str | None:
        return self._label_of.get(region)

    def __len__(self) -> int:
        return len(self._by_label)


class _NoopThreadState:
    __slots__ = ("tid", "in_gate")

    def __init__(self, tid: int) -> None:
        self.tid = tid
        self.in_gate = False


class Runtime:
    """A configured gate runtime for one run.

    Lifecycle: construct, have each worker thread call register_thread()
    exactly once before its first gate, gate away, join the workers, then
    finalize() exactly once. Record mode returns the TraceSet from finalize;
    replay mode verifies the whole trace was consumed.
    """

    def __init__(
        self,
        config: GateConfig | None = None,
        *,
        registry: RegionRegistry | None = None,
        workload_digest: str = "",
    ) -> None:
        self.config = config if config is not None else config_from_env()
        self.registry = registry if registry is not None else RegionRegistry()
        self._local = threading.local()
        self._threads: list = []
        self._tid_lock = threading.Lock()
        self._finalized = False

        mode = self.config.mode
        if mode is Mode.RECORD:
            self.engine: Recorder | Replayer | None = Recorder(
                self.config, workload_digest
            )
            self._gate_in = self.engine.gate_in
            self._gate_out = self.engine.gate_out
        elif mode is Mode.REPLAY:
            self.engine = Replayer(self.config)
            self._gate_in = self.engine.gate_in
            self._gate_out = self.engine.gate_out
        else:
            self.engine = None
            self._gate_in = None
            self._gate_out = None

    # -- threads

    def register_thread(self) -> int:
        """Register the calling thread; returns its dense thread id."""
        if getattr(self._local, "state", None) is not None:
            raise DoubleRegistration(
                f"thread already registered as tid {self._local.state.tid}"
            )
        with self._tid_lock:
            tid = len(self._threads)
            engine = self.engine
            state = (
                engine.register_thread(tid) if engine is not None else _NoopThreadState(tid)
            )
            self._threads.append(state)
        self._local.state = state
        return tid

    @property
    def thread_count(self) -> int:
        return len(self._threads)

    # -- gating

    def guarded(self, region: int, kind: int, body: Callable[[], object]):
        """Run body as one guarded access of the given kind on region."""
        try:
            tls = self._local.state
        except AttributeError:
            raise UnregisteredThread("call register_thread() before gating") from None
        if tls is None:
            raise UnregisteredThread("call register_thread() before gating")
        if tls.in_gate:
            raise NestedGateError("guarded bodies must not gate again")
        tls.in_gate = True
        try:
            gate_in = self._gate_in
            if gate_in is None:
                return body()
            gate_in(tls, region, kind)
            ok = False
            try:
                result = body()
                ok = True
            finally:
                self._gate_out(tls, region, kind, ok)
            return result
        finally:
            tls.in_gate = False

    @contextmanager
    def gate(self, region: int, kind: int) -> Iterator[None]:
        """Context-manager form of guarded() for inline bodies."""
        try:
            tls = self._local.state
        except AttributeError:
            raise UnregisteredThread("call register_thread() before gating") from None
        if tls is None:
            raise UnregisteredThread("call register_thread() before gating")
        if tls.in_gate:
            raise NestedGateError("guarded bodies must not gate again")
        tls.in_gate = True
        try:
            if self._gate_in is None:
                yield
                return
            self._gate_in(tls, region, kind)
            ok = False
            try:
                yield
                ok = True
            finally:
                self._gate_out(tls, region, kind, ok)
        finally:
            tls.in_gate = False

    # -- lifecycle

    def set_workload_digest(self, digest: str) -> None:
        if isinstance(self.engine, Recorder):
            self.engine.workload_digest = digest

    def abort(self, reason: str = "") -> None:
        """Cancel a replay in progress; spinning gates raise ReplayAborted."""
        if self.engine is not None:
            self.engine.abort(reason)

    def finalize(self) -> TraceSet | None:
        """Close the run. Record returns its TraceSet; other modes return None."""
        if self._finalized:
            raise GateError("finalize called twice")
        for state in self._threads:
            if state.in_gate:
                raise PendingInGate(f"thread {state.tid} is still inside a gate")
        self._finalized = True
        engine = self.engine
        if engine is None:
            return None
        if isinstance(engine, Recorder):
            return engine.finalize_run()
        engine.verify_consumed()
        return None
