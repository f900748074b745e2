import json

import pytest

from aerocoach.flight_state import FlightState
from aerocoach.guidance_pipeline import (
    CONTROL_AXIS,
    INSTRUMENT_FOR,
    BackendRequest,
    BackendTimeout,
    GuidancePipeline,
    InvariantViolation,
    MalformedResponse,
    OracleBackend,
    ProviderUnavailable,
    RemoteBackend,
    packet_from_payload,
    stage_schema,
    validate_record,
)
from aerocoach.knowledge_base import HashEmbedder, build_index, default_corpus_dir, load_corpus
from aerocoach.task_standards import (
    PhaseStart,
    StickTendency,
    evaluate,
    load_task_spec,
)

from conftest import DelayedBackend, FakeClock


def mk_state(**overrides):
    base = dict(
        t=10.0, altitude_ft=4500.0, pitch_deg=3.0, bank_deg=-45.0, heading_deg=40.0,
        ias_kt=105.0, gs_kt=105.0, vs_fpm=0.0,
        accel_lon_g=0.0, accel_lat_g=0.0, accel_vert_g=1.41,
    )
    base.update(overrides)
    return FlightState(**base)


SPEC = load_task_spec("steep_turn")
HOLD = SPEC.phases[1]


def report_for(state, tick=10):
    return evaluate(state, SPEC, HOLD, tick=tick)


@pytest.fixture(scope="module")
def kb():
    embedder = HashEmbedder(256)
    return build_index(load_corpus(default_corpus_dir()), embedder), embedder


def pipeline_with(backend, kb=None, **kwargs):
    index, embedder = kb if kb else (None, None)
    return GuidancePipeline(backend, index=index, embedder=embedder, **kwargs)


class FakeRecord:
    def __init__(self, report, raws, phase_transition=False):
        self.report = report
        self.phase_transition = phase_transition
        self._raws = raws

    def stage_raw(self, stage):
        return self._raws.get(stage)


def run_oracle(state, transition=None, kb=None):
    pipe = pipeline_with(OracleBackend(), kb=kb)
    report = report_for(state)
    return pipe.run(state, report, transition, "steep_turn"), report


# --- oracle behavior ---------------------------------------------------------


def test_oracle_deterministic(oracle):
    report = report_for(mk_state(bank_deg=-52.0))
    req = BackendRequest("status", "", {"deviations": [], "all_in_band": True,
                                        "worst": None}, stage_schema("status"), "status.v1")
    assert oracle.complete(req) == oracle.complete(req)


def test_nominal_tick_produces_maintain_packet():
    result, report = run_oracle(mk_state())
    assert report.all_in_band
    assert result.status is not None and result.status.status == "nominal"
    assert result.packet is not None
    assert result.packet.trigger is None
    assert result.packet.stick_op is None


def test_overbank_correction_packet():
    result, report = run_oracle(mk_state(bank_deg=-52.0))
    assert report.worst == "bank_deg"
    assert result.status.status == "deviation"
    assert "bank angle" in result.guidance_text
    assert "stick right" in result.guidance_text
    pkt = result.packet
    assert pkt.trigger == "correction"
    assert pkt.ems_mode == 2
    assert pkt.stick_op.axis == "x"
    assert pkt.stick_op.direction == "+"  # deviation is negative: push right
    assert pkt.stick_op.magnitude == "firm"  # 7/5 = 1.4 past the firm threshold
    assert pkt.instruments == ("attitude indicator",)


def test_altitude_sag_correction_packet():
    result, report = run_oracle(mk_state(altitude_ft=4380.0))
    assert report.worst == "altitude_ft"
    pkt = result.packet
    assert pkt.stick_op.axis == "y"
    assert pkt.stick_op.direction == "+"
    assert pkt.instruments == ("altimeter",)


def test_airspeed_correction_is_voice_only():
    result, report = run_oracle(mk_state(ias_kt=120.0))
    assert report.worst == "ias_kt"
    pkt = result.packet
    assert pkt.trigger == "correction"
    assert pkt.stick_op is None
    assert pkt.instruments == ("airspeed indicator",)


def test_mild_deviation_is_light():
    result, _ = run_oracle(mk_state(bank_deg=-50.5))  # ratio 1.1 < 1.2
    assert result.packet.stick_op.magnitude == "light"


def test_phase_transition_emits_pre_start():
    transition = PhaseStart("hold_45", StickTendency("y", "+"))
    result, _ = run_oracle(mk_state(), transition=transition)
    pkt = result.packet
    assert pkt.trigger == "pre_start"
    assert pkt.ems_mode == 3
    assert pkt.stick_op.magnitude == "light"
    assert pkt.stick_op.axis == "y"
    assert pkt.instruments == ()


def test_critical_status_past_three_tolerances():
    result, _ = run_oracle(mk_state(bank_deg=-61.0))  # 16/5 > 3
    assert result.status.status == "critical"


def test_oracle_outputs_always_schema_valid(kb):
    states = [
        mk_state(),
        mk_state(bank_deg=-52.0),
        mk_state(altitude_ft=4350.0, bank_deg=-49.0),
        mk_state(ias_kt=90.0),
        mk_state(bank_deg=-61.0, altitude_ft=4620.0),
    ]
    for state in states:
        result, _ = run_oracle(state, kb=kb)
        for stage, outcome in result.stages.items():
            assert outcome.ok, (stage, outcome.error)


# --- align stage --------------------------------------------------------------


def test_align_retrieves_steep_turn_chunk_first(kb):
    result, _ = run_oracle(mk_state(bank_deg=-52.0), kb=kb)
    assert not result.align_degraded
    assert result.provenance, "expected retrieved context"
    assert result.provenance[0].startswith("task_steep_turn")
    assert result.packet.provenance == result.provenance


def test_align_degrades_without_index():
    result, _ = run_oracle(mk_state(bank_deg=-52.0), kb=None)
    assert result.align_degraded
    assert result.context == ""
    assert result.packet is not None  # pipeline continues degraded


def test_align_query_uses_phase_for_nominal(kb):
    pipe = pipeline_with(OracleBackend(), kb=kb)
    report = report_for(mk_state())
    assert "maintain" in pipe.build_query("steep_turn", report)
    deviating = report_for(mk_state(bank_deg=-52.0))
    assert "bank angle" in pipe.build_query("steep_turn", deviating)


# --- failure handling -----------------------------------------------------------


class ExplodingBackend:
    backend_id = "exploding"

    def __init__(self, exc):
        self.exc = exc

    def complete(self, request):
        raise self.exc


class GarbageBackend:
    backend_id = "garbage"

    def complete(self, request):
        return "]]]not json"


class WrongSchemaBackend:
    backend_id = "wrong-schema"

    def complete(self, request):
        return json.dumps({"status": "fine", "worst_metric": None, "assessments": {}})


def test_timeout_degrades_to_no_packet():
    pipe = pipeline_with(ExplodingBackend(BackendTimeout("slow")))
    result = pipe.run(mk_state(), report_for(mk_state()), None, "steep_turn")
    assert result.packet is None
    assert not result.stages["status"].ok
    assert "timeout" in result.stages["status"].error
    assert result.stages["guidance"].error == "not_run"


def test_provider_unavailable_degrades():
    pipe = pipeline_with(ExplodingBackend(ProviderUnavailable("down")))
    result = pipe.run(mk_state(), report_for(mk_state()), None, "steep_turn")
    assert result.packet is None


def test_malformed_json_recorded():
    pipe = pipeline_with(GarbageBackend())
    result = pipe.run(mk_state(), report_for(mk_state()), None, "steep_turn")
    assert not result.stages["status"].ok
    assert result.stages["status"].raw is not None


def test_schema_violation_recorded():
    pipe = pipeline_with(WrongSchemaBackend())
    result = pipe.run(mk_state(), report_for(mk_state()), None, "steep_turn")
    assert not result.stages["status"].ok
    assert "schema" in result.stages["status"].error


def test_deadline_cuts_chain(fake_clock):
    backend = DelayedBackend(OracleBackend(), fake_clock, delay_s=0.5)
    pipe = pipeline_with(backend)
    pipe.clock = fake_clock
    result = pipe.run(mk_state(bank_deg=-52.0), report_for(mk_state(bank_deg=-52.0)),
                      None, "steep_turn")
    assert result.deadline_exceeded
    assert result.packet is None
    assert result.stages["status"].ok  # first stage finished at 0.5 s
    assert result.stages["format"].error in ("deadline_exceeded", "not_run")


def test_late_finish_discards_packet(fake_clock):
    backend = DelayedBackend(OracleBackend(), fake_clock, delay_s=0.3)
    pipe = pipeline_with(backend)
    pipe.clock = fake_clock
    result = pipe.run(mk_state(bank_deg=-52.0), report_for(mk_state(bank_deg=-52.0)),
                      None, "steep_turn")
    # 3 x 0.3 s = 0.9 s: every stage ran but the chain blew the deadline
    assert all(result.stages[s].ok for s in ("status", "guidance", "format"))
    assert result.deadline_exceeded
    assert result.packet is None


# --- packet invariants ------------------------------------------------------------


def test_packet_invariants_enforced():
    with pytest.raises(InvariantViolation):
        packet_from_payload({"stick_op": None, "ems_mode": 2, "trigger": "pre_start",
                             "instruments": [], "rationale": ""}, 1)
    with pytest.raises(InvariantViolation):
        packet_from_payload({"stick_op": None, "ems_mode": 3, "trigger": "correction",
                             "instruments": ["altimeter"], "rationale": ""}, 1)
    with pytest.raises(InvariantViolation):
        packet_from_payload({"stick_op": None, "ems_mode": 2, "trigger": "correction",
                             "instruments": [], "rationale": ""}, 1)
    with pytest.raises(InvariantViolation):
        packet_from_payload(
            {"stick_op": {"axis": "x", "direction": "+", "magnitude": "firm"},
             "ems_mode": None, "trigger": None, "instruments": [], "rationale": ""}, 1)


# --- remote backend (mocked transport) -----------------------------------------------


class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload


def test_remote_backend_parses_completion(monkeypatch):
    content = json.dumps({"status": "nominal", "worst_metric": None, "assessments": {}})
    def fake_post(url, json=None, headers=None, timeout=None):
        return FakeResponse(payload={"choices": [{"message": {"content": content}}]})
    monkeypatch.setattr("requests.post", fake_post)
    backend = RemoteBackend("http://example.invalid/v1/chat", "test-model")
    raw = backend.complete(BackendRequest("status", "sys", {}, stage_schema("status"),
                                          "status.v1"))
    assert raw == content


def test_remote_backend_http_error(monkeypatch):
    monkeypatch.setattr("requests.post", lambda *a, **k: FakeResponse(status_code=500))
    backend = RemoteBackend("http://example.invalid/v1/chat", "m")
    with pytest.raises(ProviderUnavailable):
        backend.complete(BackendRequest("status", "s", {}, stage_schema("status"), "status.v1"))


def test_remote_backend_retries_then_fails(monkeypatch):
    import requests

    calls = {"n": 0}
    def fake_post(*a, **k):
        calls["n"] += 1
        raise requests.ConnectionError("refused")
    monkeypatch.setattr("requests.post", fake_post)
    backend = RemoteBackend("http://example.invalid/v1/chat", "m", max_retries=2)
    with pytest.raises(ProviderUnavailable):
        backend.complete(BackendRequest("status", "s", {}, stage_schema("status"), "status.v1"))
    assert calls["n"] == 3


def test_remote_backend_bad_body(monkeypatch):
    monkeypatch.setattr("requests.post", lambda *a, **k: FakeResponse(payload={"nope": 1}))
    backend = RemoteBackend("http://example.invalid/v1/chat", "m")
    with pytest.raises(MalformedResponse):
        backend.complete(BackendRequest("status", "s", {}, stage_schema("status"), "status.v1"))


# --- validator ------------------------------------------------------------------------


def oracle_raws(state, transition=None):
    result, report = run_oracle(state, transition=transition)
    return {s: o.raw for s, o in result.stages.items()}, report


def test_validator_passes_oracle_record():
    raws, report = oracle_raws(mk_state(bank_deg=-52.0))
    verdict = validate_record(FakeRecord(report, raws))
    assert verdict.overall, verdict.reasons


def test_validator_c1_missing_stage():
    raws, report = oracle_raws(mk_state(bank_deg=-52.0))
    raws["format"] = None
    verdict = validate_record(FakeRecord(report, raws))
    assert not verdict.c1 and not verdict.overall
    assert verdict.c2 and verdict.c3  # the present stages are still sound


def test_validator_c3_tampered_direction():
    raws, report = oracle_raws(mk_state(bank_deg=-52.0))
    pkt = json.loads(raws["format"])
    pkt["stick_op"]["direction"] = "-"  # now rolls further into the over-bank
    raws["format"] = json.dumps(pkt)
    verdict = validate_record(FakeRecord(report, raws))
    assert verdict.c1 and verdict.c2
    assert not verdict.c3
    assert any("oppose" in r for r in verdict.reasons)


def test_validator_c3_pre_start_without_transition():
    transition = PhaseStart("hold_45", StickTendency("y", "+"))
    raws, report = oracle_raws(mk_state(), transition=transition)
    verdict = validate_record(FakeRecord(report, raws, phase_transition=False))
    assert not verdict.c3
    ok = validate_record(FakeRecord(report, raws, phase_transition=True))
    assert ok.overall


def test_control_axis_table_consistency():
    # every instrument-mapped metric with an axis maps to a real instrument
    for metric, axis in CONTROL_AXIS.items():
        assert metric in INSTRUMENT_FOR
        assert axis in ("x", "y", None)
