"""Deterministic record-and-replay gating for racy multi-threaded code.

Wrap each shared-memory access in a gate; record a run's access order under
one of three schemes (ST: one serialized order file, DC: per-thread logical
clocks, DE: clocks relaxed into epochs whose members may replay in any
order); replay the trace to reproduce the run's observable behavior.
"""

from __future__ import annotations

from .core import (
    AccessKind,
    ClockScope,
    GateConfig,
    Mode,
    RecordEntry,
    Scheme,
    SpinPolicy,
    TraceManifest,
    TraceSet,
    read_trace_set,
    write_trace_set,
)
from .errors import (
    ConfigError,
    DivergenceError,
    DoubleRegistration,
    GateError,
    IncompleteReplay,
    LengthMismatch,
    MalformedEntry,
    MalformedTrace,
    NestedGateError,
    PendingInGate,
    RecordIoError,
    ReplayAborted,
    SchemeMismatch,
    TraceExhausted,
    UnregisteredThread,
    WatchdogTimeout,
)
from .gate import Runtime, config_from_env

__all__ = [
    "AccessKind",
    "ClockScope",
    "ConfigError",
    "DivergenceError",
    "DoubleRegistration",
    "GateConfig",
    "GateError",
    "IncompleteReplay",
    "LengthMismatch",
    "MalformedEntry",
    "MalformedTrace",
    "Mode",
    "NestedGateError",
    "PendingInGate",
    "RecordEntry",
    "RecordIoError",
    "ReplayAborted",
    "Runtime",
    "Scheme",
    "SchemeMismatch",
    "SpinPolicy",
    "TraceExhausted",
    "TraceManifest",
    "TraceSet",
    "UnregisteredThread",
    "WatchdogTimeout",
    "config_from_env",
    "read_trace_set",
    "write_trace_set",
]

__version__ = "0.1.0"
