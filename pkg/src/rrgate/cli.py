"""Command-line front end.

Subcommands: record, replay, analyze, verify, bench. Exit codes are part of
the contract: 0 success, 2 configuration error, 3 record/run failure, 4
replay divergence, 5 malformed trace, 6 verification counterexample.
RR_MODE/RR_SCHEME/RR_DIR/RR_CLOCK_SCOPE/RR_SPIN provide defaults; explicit
flags always win.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import tempfile
import time
from pathlib import Path

from .analyzer import CompareResult, compare, stats, stats_csv, validate
from .core import (
    ClockScope,
    GateConfig,
    MANIFEST_NAME,
    Mode,
    Scheme,
    SpinPolicy,
    parse_manifest,
    read_trace_set,
    scope_text,
)
from .errors import (
    ConfigError,
    DivergenceError,
    GateError,
    IncompleteReplay,
    LengthMismatch,
    MalformedEntry,
    MalformedTrace,
    RecordIoError,
    ReplayAborted,
    SchemeMismatch,
    TraceExhausted,
    WatchdogTimeout,
)
from .gate import Runtime, config_from_env
from .oracle import condition1_suite, streaming_suite
from .recorder import stream_epochs
from .workloads import (
    WORKLOAD_NAMES,
    WorkloadSpec,
    digest,
    read_report,
    run_workload,
    spec_digest,
    write_report,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_DIVERGENCE = 4
EXIT_MALFORMED = 5
EXIT_COUNTEREXAMPLE = 6

REPORT_NAME = "report.txt"

_SCHEME_FLAG = {"st": Scheme.ST, "dc": Scheme.DC, "de": Scheme.DE}
_SCOPE_FLAG = {"global": ClockScope.GLOBAL, "region": ClockScope.PER_REGION}
_SPIN_FLAG = {"busy": SpinPolicy.BUSY, "yield": SpinPolicy.YIELDING}

_DIVERGENT_ERRORS = (
    DivergenceError,
    TraceExhausted,
    IncompleteReplay,
    ReplayAborted,
    WatchdogTimeout,
    LengthMismatch,
)


def _add_workload_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", required=True, choices=WORKLOAD_NAMES)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None, help="perturbation seed")


def _add_gate_args(p: argparse.ArgumentParser, dir_required: bool = True) -> None:
    p.add_argument("--dir", type=Path, required=dir_required, help="trace directory")
    p.add_argument("--scheme", choices=sorted(_SCHEME_FLAG))
    p.add_argument("--clock-scope", choices=sorted(_SCOPE_FLAG))
    p.add_argument("--spin", choices=sorted(_SPIN_FLAG))


def _config(args, mode: Mode, scheme=None, clock_scope=None) -> GateConfig:
    return config_from_env(
        mode=mode,
        scheme=scheme
        if scheme is not None
        else (_SCHEME_FLAG[args.scheme] if args.scheme else None),
        clock_scope=clock_scope
        if clock_scope is not None
        else (_SCOPE_FLAG[args.clock_scope] if args.clock_scope else None),
        trace_dir=args.dir,
        spin_policy=_SPIN_FLAG[args.spin] if args.spin else None,
    )


def cmd_record(args) -> int:
    try:
        spec = WorkloadSpec(args.workload, args.threads, args.iters, args.seed)
        config = _config(args, Mode.RECORD)
        runtime = Runtime(
            config, workload_digest=spec_digest(spec.name, spec.threads, spec.iterations)
        )
        report = run_workload(spec, runtime)
        trace = runtime.finalize()
        write_report(report, Path(args.dir) / REPORT_NAME)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GateError as exc:
        print(f"record failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(
        f"recorded {spec.name}: scheme={trace.manifest.scheme.name} "
        f"scope={scope_text(trace.manifest.clock_scope)} "
        f"threads={spec.threads} entries={trace.total_entries()} "
        f"wall={report.wall_time:.3f}s digest={digest(report)}"
    )
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        manifest = parse_manifest(Path(args.dir) / MANIFEST_NAME)
    except (MalformedTrace, MalformedEntry) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    expected = spec_digest(args.workload, args.threads, args.iters)
    if manifest.thread_count != args.threads:
        print(
            f"error: trace was recorded with {manifest.thread_count} threads, "
            f"--threads says {args.threads}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    if manifest.workload_digest and manifest.workload_digest != expected:
        print(
            "error: trace was recorded for a different workload invocation "
            f"(manifest digest {manifest.workload_digest}, this run {expected})",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        spec = WorkloadSpec(args.workload, args.threads, args.iters, args.seed)
        config = _config(
            args,
            Mode.REPLAY,
            scheme=_SCHEME_FLAG[args.scheme] if args.scheme else manifest.scheme,
            clock_scope=_SCOPE_FLAG[args.clock_scope]
            if args.clock_scope
            else manifest.clock_scope,
        )
        runtime = Runtime(config)
        report = run_workload(spec, runtime, watchdog_s=args.watchdog)
        runtime.finalize()
    except (ConfigError, SchemeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MalformedTrace, MalformedEntry) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except _DIVERGENT_ERRORS as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE

    try:
        recorded = read_report(Path(args.dir) / REPORT_NAME)
    except GateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    rec_digest, rep_digest = digest(recorded), digest(report)
    trace = runtime.engine.trace
    try:
        outcome = compare(recorded.completion_log, report.completion_log, trace)
    except LengthMismatch as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    scheme = trace.manifest.scheme
    order_ok = (
        outcome is CompareResult.EQUAL
        if scheme in (Scheme.ST, Scheme.DC)
        else outcome is not CompareResult.DIVERGENT
    )
    if rec_digest != rep_digest or not order_ok:
        if rec_digest != rep_digest:
            print(
                f"replay diverged: workload digest mismatch "
                f"(recorded {rec_digest}, replayed {rep_digest})",
                file=sys.stderr,
            )
        if not order_ok:
            print(
                f"replay diverged: completion order {outcome.value}, "
                f"{scheme.name} requires "
                f"{'Equal' if scheme in (Scheme.ST, Scheme.DC) else 'EpochEquivalent'}",
                file=sys.stderr,
            )
        return EXIT_DIVERGENCE
    print(
        f"replay ok: digest match, completion order {outcome.value}, "
        f"wall={report.wall_time:.3f}s"
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        trace = read_trace_set(Path(args.dir))
    except (MalformedTrace, MalformedEntry) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    violations = validate(trace)
    if violations:
        for item in violations:
            print(f"invalid: {item}", file=sys.stderr)
        return EXIT_MALFORMED
    s = stats(trace)
    m = trace.manifest
    print(f"# scheme={m.scheme.name} scope={scope_text(m.clock_scope)} group_key={s.group_key}")
    print(f"total_entries={s.total_entries}")
    print(f"loads={s.loads}")
    print(f"stores={s.stores}")
    print(f"exclusives={s.exclusives}")
    print(f"epoch_count={s.epoch_count}")
    print(f"parallel_ratio={s.parallel_ratio:.4f}")
    if s.histogram:
        print("histogram " + " / ".join(f"{k},{v}" for k, v in sorted(s.histogram.items())))
    if args.csv:
        Path(args.csv).write_text(stats_csv(s))
        print(f"wrote {args.csv}")
    return EXIT_OK


def cmd_verify(args) -> int:
    assign = stream_epochs
    if args.inject_assigner_bug:
        from .core import AccessKind

        def assign(kinds):  # noqa: F811 - deliberate test hook
            broken = [
                AccessKind.LOAD if k is AccessKind.EXCLUSIVE else k for k in kinds
            ]
            return stream_epochs(broken)

    failed = False
    checked, failures = condition1_suite(args.ls_bound, args.lse_bound)
    if failures:
        failed = True
        print(f"condition1: {len(failures)} of {checked} scripts FAILED", file=sys.stderr)
        kinds = [k.name[0] for _t, k, _v in failures[0]]
        print(f"  first counterexample script: {''.join(kinds)}", file=sys.stderr)
    else:
        print(f"condition1: {checked} scripts ok")

    checked, mismatches = streaming_suite(
        assign,
        exhaustive_max_len=args.stream_bound,
        random_count=args.random_count,
        random_max_len=args.random_max_len,
        seed=args.stream_seed,
    )
    if mismatches:
        failed = True
        print(
            f"epoch-equivalence: {len(mismatches)} of {checked} sequences FAILED",
            file=sys.stderr,
        )
        print(
            "  first mismatch: " + "".join(k.name[0] for k in mismatches[0]),
            file=sys.stderr,
        )
    else:
        print(f"epoch-equivalence: {checked} sequences ok")
    return EXIT_COUNTEREXAMPLE if failed else EXIT_OK


def cmd_bench(args) -> int:
    base = Path(args.dir) if args.dir else Path(tempfile.mkdtemp(prefix="rrgate-bench-"))
    rows: list[tuple[str, str, list[float]]] = []
    try:
        spec = WorkloadSpec(args.workload, args.threads, args.iters, args.seed)

        def timed_run(config: GateConfig, watchdog=None) -> float:
            runtime = Runtime(
                config,
                workload_digest=spec_digest(spec.name, spec.threads, spec.iterations),
            )
            t0 = time.perf_counter()
            run_workload(spec, runtime, watchdog_s=watchdog)
            runtime.finalize()
            return time.perf_counter() - t0

        noop_times = [
            timed_run(config_from_env(mode=Mode.NOOP)) for _ in range(args.reps)
        ]
        rows.append(("noop", "run", noop_times))
        spin = _SPIN_FLAG[args.spin] if args.spin else None
        scope = _SCOPE_FLAG[args.clock_scope] if args.clock_scope else None
        for scheme in (Scheme.ST, Scheme.DC, Scheme.DE):
            rec_times, rep_times = [], []
            for rep in range(args.reps):
                d = base / f"{scheme.name.lower()}-{rep}"
                rec_times.append(
                    timed_run(
                        config_from_env(
                            mode=Mode.RECORD, scheme=scheme, clock_scope=scope,
                            trace_dir=d, spin_policy=spin,
                        )
                    )
                )
                rep_times.append(
                    timed_run(
                        config_from_env(
                            mode=Mode.REPLAY, scheme=scheme, clock_scope=scope,
                            trace_dir=d, spin_policy=spin,
                        ),
                        watchdog=args.watchdog,
                    )
                )
            rows.append((scheme.name.lower(), "record", rec_times))
            rows.append((scheme.name.lower(), "replay", rep_times))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GateError as exc:
        print(f"bench run failed: {exc}", file=sys.stderr)
        return EXIT_RUN

    noop_mean = statistics.mean(rows[0][2])
    print(f"workload={spec.name} threads={spec.threads} iters={spec.iterations} reps={args.reps}")
    print(f"{'scheme':8} {'mode':7} {'mean_s':>9} {'min_s':>9} {'max_s':>9} {'vs_noop':>8}")
    for scheme, mode, times in rows:
        mean = statistics.mean(times)
        rel = mean / noop_mean if noop_mean > 0 else float("inf")
        print(
            f"{scheme:8} {mode:7} {mean:9.4f} {min(times):9.4f} {max(times):9.4f} {rel:8.2f}"
        )
    if args.csv:
        lines = ["scheme,mode,rep,seconds"]
        for scheme, mode, times in rows:
            lines.extend(
                f"{scheme},{mode},{i},{t:.6f}" for i, t in enumerate(times)
            )
        Path(args.csv).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    if args.workload == "data_race":
        means = {
            scheme: statistics.mean(times)
            for scheme, mode, times in rows
            if mode == "replay"
        }
        ordered = means["de"] <= means["dc"] <= means["st"]
        print(
            f"replay mean ordering de<=dc<=st: {'yes' if ordered else 'no'} "
            f"(de={means['de']:.4f} dc={means['dc']:.4f} st={means['st']:.4f}; informational)"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrgate",
        description="Record and deterministically replay racy multi-threaded workloads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("record", help="run a workload and record its access order")
    _add_workload_args(p)
    _add_gate_args(p)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="re-run a workload gated by a recorded trace")
    _add_workload_args(p)
    _add_gate_args(p)
    p.add_argument(
        "--watchdog", type=float, default=None, help="abort replay after SECONDS"
    )
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="validate a trace and print epoch statistics")
    p.add_argument("--dir", type=Path, required=True)
    p.add_argument("--csv", type=Path, help="also write the histogram as CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="run the brute-force correctness suites")
    p.add_argument("--ls-bound", type=int, default=7)
    p.add_argument("--lse-bound", type=int, default=5)
    p.add_argument("--stream-bound", type=int, default=9)
    p.add_argument("--random-count", type=int, default=10_000)
    p.add_argument("--random-max-len", type=int, default=64)
    p.add_argument("--stream-seed", type=int, default=20260815)
    p.add_argument(
        "--inject-assigner-bug",
        action="store_true",
        help="test hook: check that a broken epoch assigner is caught",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="compare wall time across schemes and modes")
    _add_workload_args(p)
    _add_gate_args(p, dir_required=False)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--csv", type=Path, help="also write per-rep timings as CSV")
    p.add_argument(
        "--watchdog", type=float, default=None, help="abort a stuck replay rep"
    )
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
