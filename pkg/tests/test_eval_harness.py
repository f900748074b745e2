import json

import pytest

from aerocoach.eval_harness import (
    EmptyLogSet,
    IncompleteTrace,
    REFERENCE_ACCURACY,
    compare_runs,
    compute_training_metrics,
    metrics_for_log,
    score_log_files,
    score_workflow,
)
from aerocoach.flight_state import FlightState
from aerocoach.session_engine import SessionConfig, read_log, run_session
from aerocoach.task_standards import TaskReference, load_task_spec


def mk_state(t, **overrides):
    base = dict(
        t=float(t), altitude_ft=4500.0, pitch_deg=2.5, bank_deg=0.0, heading_deg=90.0,
        ias_kt=105.0, gs_kt=105.0, vs_fpm=0.0,
        accel_lon_g=0.0, accel_lat_g=0.0, accel_vert_g=1.0,
    )
    base.update(overrides)
    return FlightState(**base)


@pytest.fixture(scope="module")
def oracle_logs(tmp_path_factory):
    root = tmp_path_factory.mktemp("logs")
    paths = []
    for task in ("straight_level", "takeoff_climb", "steep_turn", "deadstick_landing"):
        for condition in ("normal", "abnormal"):
            p = root / f"{task}_{condition}.jsonl"
            run_session(SessionConfig(task_id=task, condition=condition, seed=5,
                                      log_path=str(p)))
            paths.append(p)
    return paths


def test_oracle_logs_score_perfect(oracle_logs):
    report = score_log_files(oracle_logs)
    assert report.total.accuracy == 1.0
    assert set(report.per_task) == {
        "straight_level", "takeoff_climb", "steep_turn", "deadstick_landing"
    }
    assert set(report.per_condition) == {"normal", "abnormal"}
    assert all(s.accuracy == 1.0 for s in report.per_task.values())
    assert report.criterion_failures == {"c1": 0, "c2": 0, "c3": 0}


def test_injected_failure_counts(oracle_logs, tmp_path):
    header, records = read_log(oracle_logs[2])  # takeoff: 120 ticks
    # break stage-2 schema on one record out of the first hundred
    broken = records[:100]
    broken[40].stages["guidance"].raw = json.dumps({"nope": 1})
    report = score_workflow([(header, broken)])
    assert report.total.records == 100
    assert report.total.passed == 99
    assert report.total.accuracy == pytest.approx(0.99)
    assert report.criterion_failures["c2"] == 1


def test_scoring_ignores_stored_verdicts(oracle_logs):
    header, records = read_log(oracle_logs[0])
    for r in records:
        r.verdict = type(r.verdict)(c1=False, c2=False, c3=False)  # tamper
    report = score_workflow([(header, records)])
    assert report.total.accuracy == 1.0  # recomputed, not trusted


def test_empty_log_set():
    with pytest.raises(EmptyLogSet):
        score_log_files([])
    with pytest.raises(EmptyLogSet):
        score_workflow([])


def test_reference_row_present_in_outputs(oracle_logs):
    report = score_log_files(oracle_logs[:1])
    payload = report.to_json()
    assert payload["reference"]["accuracy_pct"]["total"] == 93.2
    table = report.table()
    assert "93.2" in table
    assert "not a target" in table


def test_reference_values():
    assert REFERENCE_ACCURACY["straight_level"] == 93.3
    assert REFERENCE_ACCURACY["takeoff_climb"] == 95.5
    assert REFERENCE_ACCURACY["steep_turn"] == 91.6
    assert REFERENCE_ACCURACY["deadstick_landing"] == 92.6
    assert REFERENCE_ACCURACY["normal"] == 95.6
    assert REFERENCE_ACCURACY["abnormal"] == 92.8


# --- training metrics -------------------------------------------------------------


def test_altitude_proportion_counts():
    ref = TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=105.0)
    spec = load_task_spec("straight_level", reference=ref)
    # 7 of 10 ticks inside +-100 ft
    alts = [4500, 4540, 4610, 4450, 4370, 4520, 4480, 4650, 4500, 4495]
    states = [mk_state(i + 1, altitude_ft=float(a)) for i, a in enumerate(alts)]
    metrics = compute_training_metrics(states, spec)
    assert metrics.altitude_in_band_proportion == pytest.approx(0.7)


def test_perfect_trace_metrics():
    ref = TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=105.0)
    spec = load_task_spec("straight_level", reference=ref)
    states = [mk_state(i + 1) for i in range(70)]
    metrics = compute_training_metrics(states, spec)
    assert metrics.altitude_in_band_proportion == 1.0
    assert metrics.bank_in_band_proportion == 1.0
    assert metrics.speed_in_band_proportion == 1.0
    assert metrics.heading_rollout_error_deg == pytest.approx(0.0)
    assert metrics.task_completion_time_s == 60.0


def test_rollout_error_is_circular():
    ref = TaskReference(altitude_ft=4500.0, heading_deg=350.0, ias_kt=105.0)
    spec = load_task_spec("straight_level", reference=ref)
    states = [mk_state(i + 1, heading_deg=10.0) for i in range(61)]
    metrics = compute_training_metrics(states, spec)
    assert metrics.heading_rollout_error_deg == pytest.approx(20.0)


def test_incomplete_trace_rejected():
    spec = load_task_spec("straight_level")
    with pytest.raises(IncompleteTrace):
        compute_training_metrics([], spec)


def test_metrics_invariant_under_reserialization(oracle_logs, tmp_path):
    src = oracle_logs[4]  # steep turn normal
    direct = metrics_for_log(src)
    header, records = read_log(src)
    copy = tmp_path / "copy.jsonl"
    from aerocoach.session_engine import write_log

    write_log(copy, header, records)
    again = metrics_for_log(copy)
    assert again.to_json() == direct.to_json()


def test_widening_tolerance_never_lowers_proportion():
    import dataclasses

    ref = TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=105.0)
    spec = load_task_spec("straight_level", reference=ref)
    alts = [4500, 4620, 4540, 4475, 4390, 4505]
    states = [mk_state(i + 1, altitude_ft=float(a)) for i, a in enumerate(alts)]
    base = compute_training_metrics(states, spec).altitude_in_band_proportion

    wide_phase = dataclasses.replace(
        spec.phases[0],
        envelopes=tuple(
            dataclasses.replace(e, tolerance=e.tolerance * 2) for e in spec.phases[0].envelopes
        ),
    )
    wide = dataclasses.replace(spec, phases=(wide_phase,))
    widened = compute_training_metrics(states, wide).altitude_in_band_proportion
    assert widened >= base


def test_compare_runs_deltas():
    ref = TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=105.0)
    spec = load_task_spec("straight_level", reference=ref)
    pre = compute_training_metrics([mk_state(i + 1, altitude_ft=4700.0) for i in range(61)], spec)
    post = compute_training_metrics([mk_state(i + 1) for i in range(61)], spec)
    deltas = compare_runs(pre, post)
    assert deltas["altitude_in_band_proportion"] == pytest.approx(1.0)
    assert deltas["heading_rollout_error_deg"] == pytest.approx(0.0)
    same = compare_runs(post, post)
    assert all(v == 0 for v in same.values() if v is not None)
