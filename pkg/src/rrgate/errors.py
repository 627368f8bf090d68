"""Exception types shared across the runtime.

Every error raised by this package derives from GateError so embedders can
catch one base class at the workload boundary.
"""

from __future__ import annotations


class GateError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GateError):
    """Invalid configuration value or an unusable trace directory."""


class MalformedEntry(GateError):
    """A trace entry failed structural validation (bad kind, negative epoch, truncation)."""


class MalformedTrace(GateError):
    """A trace directory or file does not decode to a consistent trace."""


class SchemeMismatch(GateError):
    """Trace was recorded under a different scheme or clock scope than requested."""


class RecordIoError(GateError):
    """Trace files could not be written."""


class TraceExhausted(GateError):
    """A thread performed more gated accesses than its recorded sequence holds."""

    def __init__(self, thread: int, consumed: int) -> None:
        super().__init__(
            f"thread {thread} gated more times than recorded ({consumed} entries consumed)"
        )
        self.thread = thread
        self.consumed = consumed


class DivergenceError(GateError):
    """Replay observed an access that does not match the recorded entry.

    Carries the structured report; the CLI prints it on the diagnostic stream.
    """

    def __init__(self, report) -> None:
        super().__init__(str(report))
        self.report = report


class ReplayAborted(GateError):
    """Raised in threads whose spin wait was cancelled after another thread failed."""


class IncompleteReplay(GateError):
    """Replay finalized with recorded entries left unconsumed."""

    def __init__(self, residual: dict[int, int]) -> None:
        pretty = ", ".join(f"thread {t}: {n} left" for t, n in sorted(residual.items()))
        super().__init__(f"replay did not consume the full trace ({pretty})")
        self.residual = residual


class PendingInGate(GateError):
    """finalize_run was called while a thread was still inside a gate."""


class DoubleRegistration(GateError):
    """A thread called register_thread twice."""


class NestedGateError(GateError):
    """A guarded body attempted another guarded access on the same thread."""


class UnregisteredThread(GateError):
    """A thread gated without registering first."""


class LengthMismatch(GateError):
    """Completion logs of different lengths cannot be compared."""


class WatchdogTimeout(GateError):
    """A replayed workload failed to finish within the watchdog deadline."""
