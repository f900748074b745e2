"""Scoring harness: workflow correctness tables and training metrics.

score_workflow() recomputes every record's validator verdict from the
stored stage outputs (stored verdicts are never trusted) and aggregates
accuracy per task, per condition, and overall, with a per-criterion
failure histogram. Reports carry a published-reference accuracy row from
a remote-model deployment for context; those numbers depend on that
proprietary model and are not a target for any local backend.

compute_training_metrics() turns a telemetry trace into task-quality
measures: in-band proportions per envelope metric, rollout heading error
on the circle, and completion time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .flight_state import FlightState, heading_delta
from .guidance_pipeline import validate_record
from .session_engine import LogHeader, SessionRecord, read_log
from .task_standards import PhaseTracker, TaskSpec, load_task_spec


class EvalError(Exception):
    pass


class EmptyLogSet(EvalError):
    pass


class IncompleteTrace(EvalError):
    pass


# Accuracy (%) reported for the original remote-model deployment of this
# workflow; shown as a reference row only. Local backends are not expected
# to reproduce these numbers.
REFERENCE_ACCURACY = {
    "straight_level": 93.3,
    "takeoff_climb": 95.5,
    "steep_turn": 91.6,
    "deadstick_landing": 92.6,
    "total": 93.2,
    "normal": 95.6,
    "abnormal": 92.8,
}
REFERENCE_LABEL = "reference (remote-model deployment; not a target)"


@dataclass
class TaskScore:
    records: int = 0
    passed: int = 0

    @property
    def accuracy(self) -> float:
        return self.passed / self.records if self.records else 0.0


@dataclass
class EvalReport:
    per_task: dict[str, TaskScore]
    per_condition: dict[str, TaskScore]
    total: TaskScore
    criterion_failures: dict[str, int]  # c1/c2/c3 -> failing record count

    def to_json(self) -> dict:
        return {
            "per_task": {
                k: {"records": v.records, "passed": v.passed, "accuracy": v.accuracy}
                for k, v in sorted(self.per_task.items())
            },
            "per_condition": {
                k: {"records": v.records, "passed": v.passed, "accuracy": v.accuracy}
                for k, v in sorted(self.per_condition.items())
            },
            "total": {
                "records": self.total.records,
                "passed": self.total.passed,
                "accuracy": self.total.accuracy,
            },
            "criterion_failures": dict(sorted(self.criterion_failures.items())),
            "reference": {"label": REFERENCE_LABEL, "accuracy_pct": REFERENCE_ACCURACY},
        }

    def table(self) -> str:
        lines = []
        lines.append(f"{'task':22s} {'records':>8s} {'passed':>8s} {'accuracy':>9s} {'ref %':>7s}")
        for task in sorted(self.per_task):
            s = self.per_task[task]
            ref = REFERENCE_ACCURACY.get(task)
            lines.append(
                f"{task:22s} {s.records:8d} {s.passed:8d} {s.accuracy * 100:8.1f}% "
                f"{ref if ref is not None else '':>7}"
            )
        for cond in sorted(self.per_condition):
            s = self.per_condition[cond]
            ref = REFERENCE_ACCURACY.get(cond)
            lines.append(
                f"{'condition: ' + cond:22s} {s.records:8d} {s.passed:8d} "
                f"{s.accuracy * 100:8.1f}% {ref if ref is not None else '':>7}"
            )
        lines.append(
            f"{'total':22s} {self.total.records:8d} {self.total.passed:8d} "
            f"{self.total.accuracy * 100:8.1f}% {REFERENCE_ACCURACY['total']:>7}"
        )
        fails = ", ".join(f"{k}={v}" for k, v in sorted(self.criterion_failures.items()))
        lines.append(f"criterion failures: {fails or 'none'}")
        lines.append(f"reference row: {REFERENCE_LABEL}")
        return "\n".join(lines)


def score_workflow(
    logs: Iterable[tuple[LogHeader, Sequence[SessionRecord]]]
) -> EvalReport:
    """Aggregate workflow correctness over a set of session logs.

    Condition labels come from the log headers (scenario metadata), never
    inferred from the traces.
    """
    per_task: dict[str, TaskScore] = {}
    per_condition: dict[str, TaskScore] = {}
    total = TaskScore()
    criterion_failures = {"c1": 0, "c2": 0, "c3": 0}
    saw_any = False

    for header, records in logs:
        for record in records:
            saw_any = True
            verdict = validate_record(record)
            task = per_task.setdefault(header.task_id, TaskScore())
            cond = per_condition.setdefault(header.condition, TaskScore())
            for score in (task, cond, total):
                score.records += 1
                score.passed += verdict.overall
            if not verdict.c1:
                criterion_failures["c1"] += 1
            if not verdict.c2:
                criterion_failures["c2"] += 1
            if not verdict.c3:
                criterion_failures["c3"] += 1

    if not saw_any:
        raise EmptyLogSet("no records to score")
    return EvalReport(
        per_task=per_task,
        per_condition=per_condition,
        total=total,
        criterion_failures=criterion_failures,
    )


def score_log_files(paths: Iterable[str | Path]) -> EvalReport:
    paths = list(paths)
    if not paths:
        raise EmptyLogSet("no log files given")
    return score_workflow(read_log(p) for p in paths)


# --- training metrics ----------------------------------------------------------


@dataclass(frozen=True)
class TrainingMetrics:
    altitude_in_band_proportion: float | None
    bank_in_band_proportion: float | None
    speed_in_band_proportion: float | None
    heading_rollout_error_deg: float | None
    task_completion_time_s: float | None

    def to_json(self) -> dict:
        return {
            "altitude_in_band_proportion": self.altitude_in_band_proportion,
            "bank_in_band_proportion": self.bank_in_band_proportion,
            "speed_in_band_proportion": self.speed_in_band_proportion,
            "heading_rollout_error_deg": self.heading_rollout_error_deg,
            "task_completion_time_s": self.task_completion_time_s,
        }


def compute_training_metrics(
    states: Sequence[FlightState],
    spec: TaskSpec,
    history_window: int = 5,
) -> TrainingMetrics:
    """Task-quality metrics over one 1 Hz trace.

    In-band proportions are counted over the ticks whose active phase
    defines an envelope for that metric; rollout error is the circular
    heading error at completion (or at the final tick if the task never
    completed).
    """
    if not states:
        raise IncompleteTrace("empty trace")
    tracker = PhaseTracker(spec, history_window=history_window)
    counts = {"altitude_ft": [0, 0], "bank_deg": [0, 0], "ias_kt": [0, 0]}
    completion_tick: int | None = None
    rollout_state: FlightState | None = None

    for state in states:
        report, _ = tracker.observe(state)
        for dev in report.deviations:
            if dev.metric in counts:
                counts[dev.metric][1] += 1
                counts[dev.metric][0] += dev.in_band
        if completion_tick is None and tracker.completed:
            completion_tick = tracker.completed_tick
            rollout_state = state

    if rollout_state is None:
        rollout_state = states[-1]
    rollout_error = abs(heading_delta(rollout_state.heading_deg, spec.reference.heading_deg))

    def prop(metric: str) -> float | None:
        inb, n = counts[metric]
        return inb / n if n else None

    return TrainingMetrics(
        altitude_in_band_proportion=prop("altitude_ft"),
        bank_in_band_proportion=prop("bank_deg"),
        speed_in_band_proportion=prop("ias_kt"),
        heading_rollout_error_deg=rollout_error,
        task_completion_time_s=float(completion_tick) if completion_tick else None,
    )


def metrics_for_log(path: str | Path) -> TrainingMetrics:
    header, records = read_log(path)
    if not records:
        raise IncompleteTrace(f"{path}: log holds no records")
    spec = load_task_spec(header.task_id, reference=header.reference)
    return compute_training_metrics(
        [r.state for r in records], spec, history_window=header.history_window
    )


def compare_runs(pre: TrainingMetrics, post: TrainingMetrics) -> dict[str, float | None]:
    """Per-metric post-minus-pre deltas; no inferential statistics."""
    deltas: dict[str, float | None] = {}
    for key, a in pre.to_json().items():
        b = post.to_json()[key]
        deltas[key] = (b - a) if (a is not None and b is not None) else None
    return deltas
