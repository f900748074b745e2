"""Flight-task standards: phased target envelopes and deviation scoring.

Each of the four training tasks is a TaskSpec: an ordered list of phases,
each holding metric envelopes (target +- tolerance), entry conditions,
the stick tendency cued at phase start, and the control targets the
synthetic trainee flies toward. Envelope defaults follow common
certification-standard values (steep turn: altitude +-100 ft, airspeed
+-10 kt, bank 45 +-5 deg, rollout heading +-10 deg); they live in data,
not code, and can be loaded from JSON spec files.

evaluate() turns one FlightState into a DeviationReport: per-metric signed
deviations (heading on the circle), in/out-of-band flags, the worst
offender, and trend flags from a short history window.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .flight_state import METRIC_KEYS, FlightState, heading_delta


class StandardsError(Exception):
    pass


class UnknownTask(StandardsError):
    def __init__(self, task_id: str):
        super().__init__(f"unknown task: {task_id!r} (expected one of {sorted(TASK_IDS)})")
        self.task_id = task_id


class InvalidSpecFile(StandardsError):
    pass


TASK_IDS = ("straight_level", "takeoff_climb", "steep_turn", "deadstick_landing")

# Worst-offender tie-break order (highest priority first); metrics not
# listed rank after all listed ones, alphabetically.
METRIC_PRIORITY = ("altitude_ft", "bank_deg", "ias_kt", "heading_deg", "pitch_deg", "vs_fpm")

CIRCULAR_METRICS = frozenset({"heading_deg"})

CONDITION_OPS = ("ge", "le")
DERIVED_KEYS = ("bank_abs", "pitch_abs", "heading_err_abs", "phase_elapsed_s", "task_elapsed_s")


@dataclass(frozen=True, slots=True)
class TaskReference:
    """Per-scenario numbers the task envelopes are anchored to."""

    altitude_ft: float
    heading_deg: float
    ias_kt: float
    turn_direction: str = "left"  # steep turn only

    def to_json(self) -> dict:
        return {
            "altitude_ft": self.altitude_ft,
            "heading_deg": self.heading_deg,
            "ias_kt": self.ias_kt,
            "turn_direction": self.turn_direction,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskReference":
        return cls(
            altitude_ft=float(obj["altitude_ft"]),
            heading_deg=float(obj["heading_deg"]),
            ias_kt=float(obj["ias_kt"]),
            turn_direction=obj.get("turn_direction", "left"),
        )


@dataclass(frozen=True, slots=True)
class PhaseTargets:
    """What the trainee controller steers toward during a phase."""

    altitude_ft: float | None = None
    heading_deg: float | None = None
    bank_deg: float | None = None
    ias_kt: float | None = None
    pitch_deg: float | None = None
    vs_fpm: float | None = None
    throttle: float | None = None
    pitch_for_speed: bool = False  # manage ias with pitch (climb/glide)
    base_pitch_deg: float = 0.0

    def to_json(self) -> dict:
        out = {}
        for k in ("altitude_ft", "heading_deg", "bank_deg", "ias_kt",
                  "pitch_deg", "vs_fpm", "throttle"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        if self.pitch_for_speed:
            out["pitch_for_speed"] = True
            out["base_pitch_deg"] = self.base_pitch_deg
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PhaseTargets":
        return cls(**obj)


@dataclass(frozen=True, slots=True)
class StickTendency:
    """Required stick motion for a phase, cued by the pre-start stimulation."""

    axis: str  # "x" | "y"
    direction: str  # "+" | "-"


@dataclass(frozen=True, slots=True)
class MetricEnvelope:
    metric: str
    target: float
    tolerance: float
    severity: float = 1.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.metric not in METRIC_KEYS:
            raise ValueError(f"envelope references unknown metric: {self.metric}")

    def deviation_of(self, state: FlightState) -> float:
        value = state.metric(self.metric)
        if self.metric in CIRCULAR_METRICS:
            return heading_delta(value, self.target)
        return value - self.target


@dataclass(frozen=True, slots=True)
class Condition:
    """A single comparison on a state metric or derived key."""

    key: str
    op: str  # "ge" | "le"
    value: float

    def __post_init__(self):
        if self.op not in CONDITION_OPS:
            raise ValueError(f"unknown condition op: {self.op}")
        if self.key not in METRIC_KEYS and self.key not in DERIVED_KEYS:
            raise ValueError(f"unknown condition key: {self.key}")

    def holds(self, state: FlightState, ctx: dict[str, float]) -> bool:
        if self.key in ctx:
            v = ctx[self.key]
        else:
            v = state.metric(self.key)
        return v >= self.value if self.op == "ge" else v <= self.value


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    entry: tuple[Condition, ...]
    envelopes: tuple[MetricEnvelope, ...]
    targets: PhaseTargets
    tendency: StickTendency | None = None


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    phases: tuple[PhaseSpec, ...]
    completion: tuple[Condition, ...]
    reference: TaskReference

    def __post_init__(self):
        if not self.phases:
            raise ValueError("a task needs at least one phase")
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise ValueError("phase names must be unique")

    def phase_index(self, name: str) -> int:
        for i, p in enumerate(self.phases):
            if p.name == name:
                return i
        raise KeyError(name)

    def to_json(self) -> dict:
        def cond(c: Condition) -> dict:
            return {"key": c.key, "op": c.op, "value": c.value}

        return {
            "task_id": self.task_id,
            "reference": self.reference.to_json(),
            "phases": [
                {
                    "name": p.name,
                    "entry": [cond(c) for c in p.entry],
                    "envelopes": [
                        {"metric": e.metric, "target": e.target,
                         "tolerance": e.tolerance, "severity": e.severity}
                        for e in p.envelopes
                    ],
                    "targets": p.targets.to_json(),
                    "tendency": (
                        {"axis": p.tendency.axis, "direction": p.tendency.direction}
                        if p.tendency
                        else None
                    ),
                }
                for p in self.phases
            ],
            "completion": [cond(c) for c in self.completion],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        try:
            phases = tuple(
                PhaseSpec(
                    name=p["name"],
                    entry=tuple(Condition(**c) for c in p.get("entry", [])),
                    envelopes=tuple(MetricEnvelope(**e) for e in p.get("envelopes", [])),
                    targets=PhaseTargets.from_json(p.get("targets", {})),
                    tendency=(
                        StickTendency(**p["tendency"]) if p.get("tendency") else None
                    ),
                )
                for p in obj["phases"]
            )
            return cls(
                task_id=obj["task_id"],
                phases=phases,
                completion=tuple(Condition(**c) for c in obj.get("completion", [])),
                reference=TaskReference.from_json(obj["reference"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpecFile(f"bad task spec: {exc}") from None


def load_task_spec_file(path: str | Path) -> TaskSpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpecFile(str(exc)) from None
    return TaskSpec.from_json(obj)


# --- deviation reporting ----------------------------------------------------


@dataclass(frozen=True, slots=True)
class MetricDeviation:
    metric: str
    value: float
    target: float
    tolerance: float
    deviation: float  # signed, value - target (circular for heading)
    in_band: bool
    severity: float = 1.0

    @property
    def ratio(self) -> float:
        return abs(self.deviation) / self.tolerance * self.severity


@dataclass(frozen=True)
class DeviationReport:
    tick: int
    phase: str
    deviations: tuple[MetricDeviation, ...]
    worst: str | None  # metric name of the worst out-of-band offender
    trends: tuple[str, ...] = ()  # metrics whose |deviation| keeps growing

    @property
    def all_in_band(self) -> bool:
        return all(d.in_band for d in self.deviations)

    def dev(self, metric: str) -> MetricDeviation | None:
        for d in self.deviations:
            if d.metric == metric:
                return d
        return None

    def to_json(self) -> dict:
        return {
            "tick": self.tick,
            "phase": self.phase,
            "worst": self.worst,
            "trends": list(self.trends),
            "deviations": [
                {
                    "metric": d.metric,
                    "value": d.value,
                    "target": d.target,
                    "tolerance": d.tolerance,
                    "deviation": d.deviation,
                    "in_band": d.in_band,
                    "severity": d.severity,
                }
                for d in self.deviations
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DeviationReport":
        return cls(
            tick=obj["tick"],
            phase=obj["phase"],
            worst=obj["worst"],
            trends=tuple(obj.get("trends", [])),
            deviations=tuple(MetricDeviation(**d) for d in obj["deviations"]),
        )


def _priority_rank(metric: str) -> tuple[int, str]:
    try:
        return (METRIC_PRIORITY.index(metric), metric)
    except ValueError:
        return (len(METRIC_PRIORITY), metric)


def evaluate(
    state: FlightState,
    spec: TaskSpec,
    phase: PhaseSpec,
    history: Sequence[FlightState] = (),
    tick: int | None = None,
    trend_ticks: int = 3,
) -> DeviationReport:
    """Score one state against a phase's envelopes. Pure and total."""
    devs = []
    for env in phase.envelopes:
        d = env.deviation_of(state)
        devs.append(
            MetricDeviation(
                metric=env.metric,
                value=state.metric(env.metric),
                target=env.target,
                tolerance=env.tolerance,
                deviation=d,
                in_band=abs(d) <= env.tolerance,
                severity=env.severity,
            )
        )

    out_of_band = [d for d in devs if not d.in_band]
    worst = None
    if out_of_band:
        worst = min(out_of_band, key=lambda d: (-d.ratio, _priority_rank(d.metric))).metric

    trends = []
    if len(history) >= trend_ticks - 1:
        for env in phase.envelopes:
            series = [abs(env.deviation_of(s)) for s in history[-(trend_ticks - 1):]]
            series.append(abs(env.deviation_of(state)))
            if all(a < b for a, b in zip(series, series[1:])):
                trends.append(env.metric)

    return DeviationReport(
        tick=tick if tick is not None else int(state.t),
        phase=phase.name,
        deviations=tuple(devs),
        worst=worst,
        trends=tuple(trends),
    )


@dataclass(frozen=True, slots=True)
class PhaseStart:
    """Fired when a phase begins; carries the cue the pre-start should give."""

    phase: str
    tendency: StickTendency | None


@dataclass(frozen=True, slots=True)
class Transition:
    kind: str  # "stay" | "advance" | "complete"
    phase: str  # phase in effect after the decision
    event: PhaseStart | None = None


def advance_phase(
    report: DeviationReport,
    state: FlightState,
    spec: TaskSpec,
    current_index: int,
    ctx: dict[str, float],
) -> Transition:
    """Advance exactly when the next phase's entry condition holds.

    Phases never skip and never regress; completion only fires from the
    last phase when the task's completion conditions all hold.
    """
    current = spec.phases[current_index]
    if current_index + 1 < len(spec.phases):
        nxt = spec.phases[current_index + 1]
        if all(c.holds(state, ctx) for c in nxt.entry):
            return Transition("advance", nxt.name, PhaseStart(nxt.name, nxt.tendency))
        return Transition("stay", current.name)
    if spec.completion and all(c.holds(state, ctx) for c in spec.completion):
        return Transition("complete", current.name)
    return Transition("stay", current.name)


class PhaseTracker:
    """Stateful wrapper: phase machine plus history window and derived keys."""

    def __init__(self, spec: TaskSpec, history_window: int = 5, trend_ticks: int = 3):
        self.spec = spec
        self.trend_ticks = trend_ticks
        self._index = 0
        self._tick = 0
        self._phase_entry_tick = 0
        self._history: deque[FlightState] = deque(maxlen=history_window)
        self._started = False
        self.completed = False
        self.completed_tick: int | None = None

    @property
    def phase(self) -> PhaseSpec:
        return self.spec.phases[self._index]

    def targets(self) -> PhaseTargets:
        return self.phase.targets

    def context(self, state: FlightState) -> dict[str, float]:
        return {
            "bank_abs": abs(state.bank_deg),
            "pitch_abs": abs(state.pitch_deg),
            "heading_err_abs": abs(heading_delta(state.heading_deg, self.spec.reference.heading_deg)),
            "phase_elapsed_s": float(self._tick - self._phase_entry_tick),
            "task_elapsed_s": float(self._tick),
        }

    def observe(self, state: FlightState) -> tuple[DeviationReport, PhaseStart | None]:
        """Consume one 1 Hz state; returns its report and any phase event."""
        self._tick += 1
        event: PhaseStart | None = None
        if not self._started:
            self._started = True
            first = self.spec.phases[0]
            event = PhaseStart(first.name, first.tendency)

        report = evaluate(
            state, self.spec, self.phase,
            history=tuple(self._history), tick=self._tick,
            trend_ticks=self.trend_ticks,
        )
        transition = advance_phase(report, state, self.spec, self._index, self.context(state))
        if transition.kind == "advance":
            self._index += 1
            self._phase_entry_tick = self._tick
            self._history.clear()
            event = transition.event
        elif transition.kind == "complete" and not self.completed:
            self.completed = True
            self.completed_tick = self._tick
        if transition.kind != "advance":
            self._history.append(state)
        return report, event


# --- built-in task specs ----------------------------------------------------


def load_task_spec(task_id: str, reference: TaskReference | None = None) -> TaskSpec:
    """The built-in spec for a task, anchored to a reference (or defaults)."""
    builder = _SPEC_BUILDERS.get(task_id)
    if builder is None:
        raise UnknownTask(task_id)
    return builder(reference)


def _straight_level_spec(ref: TaskReference | None) -> TaskSpec:
    r = ref or TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=110.0)
    hold = PhaseSpec(
        name="hold",
        entry=(),
        envelopes=(
            MetricEnvelope("altitude_ft", r.altitude_ft, 100.0),
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
            MetricEnvelope("bank_deg", 0.0, 5.0),
        ),
        targets=PhaseTargets(altitude_ft=r.altitude_ft, heading_deg=r.heading_deg, ias_kt=r.ias_kt),
        tendency=None,
    )
    return TaskSpec(
        task_id="straight_level",
        phases=(hold,),
        completion=(Condition("task_elapsed_s", "ge", 60.0),),
        reference=r,
    )


def _takeoff_climb_spec(ref: TaskReference | None) -> TaskSpec:
    r = ref or TaskReference(altitude_ft=500.0, heading_deg=90.0, ias_kt=75.0)
    roll = PhaseSpec(
        name="takeoff_roll",
        entry=(),
        envelopes=(
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
            MetricEnvelope("bank_deg", 0.0, 5.0),
        ),
        targets=PhaseTargets(heading_deg=r.heading_deg, pitch_deg=0.0, throttle=1.0),
        tendency=None,
    )
    rotate = PhaseSpec(
        name="rotate",
        entry=(Condition("ias_kt", "ge", 58.0),),
        envelopes=(
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
            MetricEnvelope("bank_deg", 0.0, 5.0),
            MetricEnvelope("pitch_deg", 8.0, 4.0),
        ),
        targets=PhaseTargets(heading_deg=r.heading_deg, pitch_deg=8.0, throttle=1.0),
        tendency=StickTendency("y", "+"),
    )
    climb = PhaseSpec(
        name="climb",
        entry=(Condition("altitude_ft", "ge", 50.0), Condition("ias_kt", "ge", 72.0)),
        envelopes=(
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
            MetricEnvelope("bank_deg", 0.0, 5.0),
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
            MetricEnvelope("vs_fpm", 900.0, 400.0),
        ),
        targets=PhaseTargets(
            heading_deg=r.heading_deg, ias_kt=r.ias_kt, throttle=1.0,
            pitch_for_speed=True, base_pitch_deg=8.0,
        ),
        tendency=StickTendency("y", "+"),
    )
    return TaskSpec(
        task_id="takeoff_climb",
        phases=(roll, rotate, climb),
        completion=(Condition("altitude_ft", "ge", r.altitude_ft),),
        reference=r,
    )


def _steep_turn_spec(ref: TaskReference | None) -> TaskSpec:
    r = ref or TaskReference(altitude_ft=4500.0, heading_deg=90.0, ias_kt=105.0,
                             turn_direction="left")
    left = r.turn_direction != "right"
    bank_target = -45.0 if left else 45.0
    into, out_of = ("-", "+") if left else ("+", "-")
    roll_in = PhaseSpec(
        name="roll_in",
        entry=(),
        envelopes=(
            MetricEnvelope("altitude_ft", r.altitude_ft, 100.0),
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
        ),
        targets=PhaseTargets(altitude_ft=r.altitude_ft, bank_deg=bank_target, ias_kt=r.ias_kt),
        tendency=StickTendency("x", into),
    )
    hold = PhaseSpec(
        name="hold_45",
        entry=(Condition("bank_abs", "ge", 40.0),),
        envelopes=(
            MetricEnvelope("altitude_ft", r.altitude_ft, 100.0),
            MetricEnvelope("bank_deg", bank_target, 5.0),
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
        ),
        targets=PhaseTargets(altitude_ft=r.altitude_ft, bank_deg=bank_target, ias_kt=r.ias_kt),
        tendency=StickTendency("y", "+"),  # back pressure carries the turn
    )
    roll_out = PhaseSpec(
        name="roll_out",
        entry=(
            Condition("phase_elapsed_s", "ge", 15.0),
            Condition("heading_err_abs", "le", 30.0),
        ),
        envelopes=(
            MetricEnvelope("altitude_ft", r.altitude_ft, 100.0),
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
        ),
        targets=PhaseTargets(
            altitude_ft=r.altitude_ft, heading_deg=r.heading_deg, ias_kt=r.ias_kt
        ),
        tendency=StickTendency("x", out_of),
    )
    return TaskSpec(
        task_id="steep_turn",
        phases=(roll_in, hold, roll_out),
        completion=(
            Condition("bank_abs", "le", 7.0),
            Condition("heading_err_abs", "le", 10.0),
            Condition("task_elapsed_s", "ge", 25.0),
        ),
        reference=r,
    )


def _deadstick_spec(ref: TaskReference | None) -> TaskSpec:
    r = ref or TaskReference(altitude_ft=1200.0, heading_deg=90.0, ias_kt=78.0)
    glide = PhaseSpec(
        name="glide_establish",
        entry=(),
        envelopes=(
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
            MetricEnvelope("bank_deg", 0.0, 10.0),
        ),
        targets=PhaseTargets(
            heading_deg=r.heading_deg, ias_kt=r.ias_kt,
            pitch_for_speed=True, base_pitch_deg=-1.0,
        ),
        tendency=StickTendency("y", "-"),
    )
    final = PhaseSpec(
        name="final_glide",
        entry=(Condition("altitude_ft", "le", 600.0),),
        envelopes=(
            MetricEnvelope("ias_kt", r.ias_kt, 10.0),
            MetricEnvelope("bank_deg", 0.0, 10.0),
            MetricEnvelope("heading_deg", r.heading_deg, 10.0),
        ),
        targets=PhaseTargets(
            heading_deg=r.heading_deg, ias_kt=r.ias_kt,
            pitch_for_speed=True, base_pitch_deg=-1.0,
        ),
        tendency=StickTendency("y", "-"),
    )
    return TaskSpec(
        task_id="deadstick_landing",
        phases=(glide, final),
        completion=(Condition("altitude_ft", "le", 100.0),),
        reference=r,
    )


_SPEC_BUILDERS = {
    "straight_level": _straight_level_spec,
    "takeoff_climb": _takeoff_climb_spec,
    "steep_turn": _steep_turn_spec,
    "deadstick_landing": _deadstick_spec,
}
