"""Runtime front-end tests: config, registry, registration, gating rules."""

from __future__ import annotations

import threading

import pytest

from rrgate.core import ClockScope, Mode, Scheme, SpinPolicy
from rrgate.errors import (
    ConfigError,
    DoubleRegistration,
    GateError,
    NestedGateError,
    UnregisteredThread,
)
from rrgate.gate import RegionRegistry, Runtime, config_from_env
from conftest import E, L, S, make_config


def test_config_defaults_from_empty_env():
    cfg = config_from_env(env={})
    assert cfg.mode is Mode.NOOP
    assert cfg.scheme is Scheme.DE
    assert cfg.clock_scope is ClockScope.GLOBAL
    assert cfg.trace_dir is None
    assert cfg.spin_policy is SpinPolicy.YIELDING


def test_config_reads_environment_table():
    env = {
        "RR_MODE": "record",
        "RR_SCHEME": "st",
        "RR_DIR": "/tmp/somewhere",
        "RR_CLOCK_SCOPE": "region",
        "RR_SPIN": "busy",
    }
    cfg = config_from_env(env=env)
    assert cfg.mode is Mode.RECORD
    assert cfg.scheme is Scheme.ST
    assert str(cfg.trace_dir) == "/tmp/somewhere"
    assert cfg.clock_scope is ClockScope.PER_REGION
    assert cfg.spin_policy is SpinPolicy.BUSY


def test_config_values_are_case_insensitive():
    cfg = config_from_env(env={"RR_MODE": " Record ", "RR_SCHEME": "DC"})
    assert cfg.mode is Mode.RECORD
    assert cfg.scheme is Scheme.DC


def test_config_overrides_beat_environment(tmp_path):
    cfg = config_from_env(
        env={"RR_MODE": "record", "RR_SCHEME": "st", "RR_DIR": "/nope"},
        mode=Mode.REPLAY,
        scheme=Scheme.DE,
        trace_dir=tmp_path,
    )
    assert cfg.mode is Mode.REPLAY
    assert cfg.scheme is Scheme.DE
    assert cfg.trace_dir == tmp_path


@pytest.mark.parametrize(
    "env",
    [
        {"RR_MODE": "sometimes"},
        {"RR_SCHEME": "zz"},
        {"RR_CLOCK_SCOPE": "universe"},
        {"RR_SPIN": "never"},
    ],
)
def test_config_rejects_unknown_values(env):
    with pytest.raises(ConfigError):
        config_from_env(env=env)


def test_config_rejects_tiny_history():
    with pytest.raises(ConfigError):
        config_from_env(env={}, history_capacity=1)


def test_registry_dense_ids_are_stable_and_idempotent():
    reg = RegionRegistry()
    a = reg.register("alpha")
    b = reg.register("beta")
    assert (a, b) == (0, 1)
    assert reg.register("alpha") == 0
    assert len(reg) == 2
    assert reg.label_of(1) == "beta"
    assert reg.label_of(7) is None


def test_registry_hashed_ids_are_deterministic():
    reg1, reg2 = RegionRegistry(), RegionRegistry()
    rid = reg1.register_hashed("cache.line.3")
    assert reg2.register_hashed("cache.line.3") == rid
    assert reg1.register_hashed("cache.line.3") == rid
    assert reg1.label_of(rid) == "cache.line.3"


def test_registry_hashed_collision_rejected():
    # both strings crc32 to the same value
    reg = RegionRegistry()
    reg.register_hashed("plumless")
    with pytest.raises(ConfigError):
        reg.register_hashed("buckeroo")


def test_noop_runtime_is_transparent():
    rt = Runtime(config_from_env(env={}))
    rt.register_thread()
    out = rt.guarded(0, int(S), lambda: "ran")
    assert out == "ran"
    with rt.gate(0, int(L)):
        pass
    assert rt.finalize() is None


def test_register_thread_twice_rejected():
    rt = Runtime(config_from_env(env={}))
    rt.register_thread()
    with pytest.raises(DoubleRegistration):
        rt.register_thread()


def test_gate_requires_registration():
    rt = Runtime(config_from_env(env={}))
    with pytest.raises(UnregisteredThread):
        rt.guarded(0, int(L), lambda: None)
    with pytest.raises(UnregisteredThread):
        with rt.gate(0, int(L)):
            pass


def test_registration_is_per_thread():
    rt = Runtime(config_from_env(env={}))
    rt.register_thread()
    seen = []

    def other():
        try:
            rt.guarded(0, int(L), lambda: None)
        except UnregisteredThread:
            seen.append("unregistered")
            seen.append(rt.register_thread())

    t = threading.Thread(target=other)
    t.start()
    t.join()
    assert seen == ["unregistered", 1]
    assert rt.thread_count == 2


def test_nested_gate_rejected(tmp_path):
    rt = Runtime(make_config(Mode.RECORD, Scheme.DE, tmp_path))
    rt.register_thread()
    with pytest.raises(NestedGateError):
        rt.guarded(0, int(L), lambda: rt.guarded(0, int(L), lambda: None))
    # the failed outer gate must not leave the thread marked in-gate
    rt.guarded(0, int(L), lambda: None)
    trace = rt.finalize()
    assert len(trace.per_thread[0]) == 1


def test_gate_context_manager_matches_guarded(tmp_path):
    rt = Runtime(make_config(Mode.RECORD, Scheme.DE, tmp_path))
    rt.register_thread()
    cell = [0]
    with rt.gate(0, int(S)):
        cell[0] = 5
    rt.guarded(0, int(L), lambda: cell[0])
    trace = rt.finalize()
    kinds = [e.kind for e in trace.per_thread[0]]
    assert kinds == [S, L]


def test_body_result_passes_through(tmp_path):
    rt = Runtime(make_config(Mode.RECORD, Scheme.DC, tmp_path))
    rt.register_thread()
    assert rt.guarded(3, int(E), lambda: {"answer": 42}) == {"answer": 42}
    rt.finalize()


def test_finalize_twice_rejected_noop():
    rt = Runtime(config_from_env(env={}))
    rt.finalize()
    with pytest.raises(GateError):
        rt.finalize()


def test_set_workload_digest_reaches_manifest(tmp_path):
    rt = Runtime(make_config(Mode.RECORD, Scheme.DC, tmp_path))
    rt.set_workload_digest("feedbead")
    rt.register_thread()
    rt.guarded(0, int(L), lambda: None)
    trace = rt.finalize()
    assert trace.manifest.workload_digest == "feedbead"
