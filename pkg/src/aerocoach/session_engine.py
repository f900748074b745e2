"""Session orchestration: the 1 Hz telemetry-analysis-feedback loop.

Each tick runs standards evaluation synchronously, the guidance pipeline
under its deadline, then safety-gates and emits EMS commands and voice
events. Everything that happened in the second is combined into one
SessionRecord; a session log is JSON-lines with a header line followed by
one record per tick, and replay() recomputes reports and verdicts from
the stored states to detect any divergence or tampering.

With the oracle backend and a fixed seed, a batch session is a pure
function of its config: logs are byte-identical across runs. Batch
sessions therefore default to a null clock (latencies recorded as zero);
interactive and remote-backend sessions use the monotonic wall clock.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from .ems_control import (
    CalibrationProfile,
    EmsCommand,
    SafetyGate,
    default_profile,
    encode_frame,
    map_direction,
    select_mode,
    synthesize,
)
from .ems_device import DeviceUnavailable, LoopbackDevice, open_device
from .flight_state import ControlInput, FlightState, TelemetryRecord, parse_telemetry_line
from .flight_sim import (
    DEFAULT_PARAMS,
    NudgeWindow,
    Scenario,
    SimSession,
    TraineeSkill,
    builtin_scenario,
)
from .guidance_pipeline import (
    GuidancePipeline,
    PipelineResult,
    ValidatorVerdict,
    make_backend,
    validate_record,
)
from .knowledge_base import FlatIndex, HashEmbedder, build_index, default_corpus_dir, load_corpus
from .task_standards import (
    DeviationReport,
    PhaseTracker,
    TaskReference,
    load_task_spec,
)

LOG_SCHEMA = "aerocoach.session/1"

NUDGE_SIGNS = {"right": (1.0, 0.0), "left": (-1.0, 0.0), "back": (0.0, 1.0), "fwd": (0.0, -1.0)}


class SessionError(Exception):
    pass


class ConfigInvalid(SessionError):
    pass


class SourceExhausted(SessionError):
    pass


class CorruptLog(SessionError):
    pass


DEFAULT_SKILL = TraineeSkill(gain_error=0.85, reaction_delay_s=0.0, noise_sigma=0.05,
                             compliance=0.5)


@dataclass(frozen=True)
class SessionConfig:
    task_id: str
    condition: str = "normal"
    variant: int = 0
    scenario: Scenario | None = None
    telemetry_path: str | None = None  # external 1 Hz telemetry instead of the sim
    backend: str = "oracle"
    backend_config: dict = field(default_factory=dict)
    assist: bool = True
    seed: int = 0
    skill: TraineeSkill = DEFAULT_SKILL
    calibration: CalibrationProfile | None = None
    deadline_ms: float = 800.0
    correction_duration_ms: int = 400
    prestart_duration_ms: int = 800
    device: str | None = None  # None/'sim' = in-process loopback, or 'tcp:host:port'
    index_path: str | None = None
    log_path: str | None = None
    history_window: int = 5

    def __post_init__(self):
        if not 0 < self.deadline_ms < 1000:
            raise ConfigInvalid("deadline_ms must be in (0, 1000)")
        if self.condition not in ("normal", "abnormal"):
            raise ConfigInvalid(f"unknown condition: {self.condition}")


@dataclass
class StageLog:
    ok: bool
    raw: str | None = None
    error: str | None = None
    latency_ms: float = 0.0

    def to_json(self) -> dict:
        return {"ok": self.ok, "raw": self.raw, "error": self.error,
                "latency_ms": self.latency_ms}

    @classmethod
    def from_json(cls, obj: dict) -> "StageLog":
        return cls(ok=obj["ok"], raw=obj["raw"], error=obj["error"],
                   latency_ms=obj["latency_ms"])


@dataclass
class CommandLog:
    channel: str
    mode: int
    peak_fraction: float
    peak_ma: float
    duration_ms: int
    start_tick: int
    purpose: str
    gate: str  # "pass" | "clamped"
    frame_hex: str

    def to_json(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_json(cls, obj: dict) -> "CommandLog":
        return cls(**obj)


@dataclass(frozen=True)
class VoiceEvent:
    tick: int
    instrument: str
    template_id: str = "check_instrument.v1"

    def to_json(self) -> dict:
        return {"tick": self.tick, "instrument": self.instrument,
                "template_id": self.template_id}

    @classmethod
    def from_json(cls, obj: dict) -> "VoiceEvent":
        return cls(**obj)


@dataclass
class SessionRecord:
    """Everything one tick produced, combined into a single record."""

    tick: int
    state: FlightState
    control: ControlInput | None
    report: DeviationReport
    phase: str
    phase_transition: bool
    transition: dict | None  # {"phase":..., "tendency": {...}|None}
    align: dict  # {"query":..., "chunk_ids": [...], "degraded": bool}
    stages: dict[str, StageLog]
    status: dict | None
    guidance_text: str | None
    packet: dict | None
    commands: list[CommandLog]
    voice: list[VoiceEvent]
    verdict: ValidatorVerdict
    flags: list[str]
    deadline_exceeded: bool
    latency_ms: float

    def stage_raw(self, stage: str) -> str | None:
        log = self.stages.get(stage)
        return log.raw if log else None

    def to_json(self) -> dict:
        return {
            "tick": self.tick,
            "state": {"t": self.state.t, **self.state.as_metrics()},
            "control": (
                {"stick_x": self.control.stick_x, "stick_y": self.control.stick_y,
                 "throttle": self.control.throttle}
                if self.control
                else None
            ),
            "report": self.report.to_json(),
            "phase": self.phase,
            "phase_transition": self.phase_transition,
            "transition": self.transition,
            "align": self.align,
            "stages": {name: log.to_json() for name, log in self.stages.items()},
            "status": self.status,
            "guidance_text": self.guidance_text,
            "packet": self.packet,
            "commands": [c.to_json() for c in self.commands],
            "voice": [v.to_json() for v in self.voice],
            "verdict": self.verdict.to_json(),
            "flags": self.flags,
            "deadline_exceeded": self.deadline_exceeded,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SessionRecord":
        state_obj = dict(obj["state"])
        t = state_obj.pop("t")
        state = FlightState(t=t, **state_obj)
        ctl = obj["control"]
        return cls(
            tick=obj["tick"],
            state=state,
            control=ControlInput(**ctl) if ctl else None,
            report=DeviationReport.from_json(obj["report"]),
            phase=obj["phase"],
            phase_transition=obj["phase_transition"],
            transition=obj["transition"],
            align=obj["align"],
            stages={name: StageLog.from_json(s) for name, s in obj["stages"].items()},
            status=obj["status"],
            guidance_text=obj["guidance_text"],
            packet=obj["packet"],
            commands=[CommandLog.from_json(c) for c in obj["commands"]],
            voice=[VoiceEvent.from_json(v) for v in obj["voice"]],
            verdict=ValidatorVerdict.from_json(obj["verdict"]),
            flags=list(obj["flags"]),
            deadline_exceeded=obj["deadline_exceeded"],
            latency_ms=obj["latency_ms"],
        )


@dataclass(frozen=True)
class LogHeader:
    task_id: str
    condition: str
    variant: int
    backend: str
    assist: bool
    seed: int
    scenario_name: str
    reference: TaskReference
    deadline_ms: float
    history_window: int = 5
    schema: str = LOG_SCHEMA

    def to_json(self) -> dict:
        return {
            "schema": self.schema,
            "task_id": self.task_id,
            "condition": self.condition,
            "variant": self.variant,
            "backend": self.backend,
            "assist": self.assist,
            "seed": self.seed,
            "scenario_name": self.scenario_name,
            "reference": self.reference.to_json(),
            "deadline_ms": self.deadline_ms,
            "history_window": self.history_window,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LogHeader":
        if obj.get("schema") != LOG_SCHEMA:
            raise CorruptLog(f"unknown log schema: {obj.get('schema')!r}")
        return cls(
            task_id=obj["task_id"],
            condition=obj["condition"],
            variant=obj["variant"],
            backend=obj["backend"],
            assist=obj["assist"],
            seed=obj["seed"],
            scenario_name=obj["scenario_name"],
            reference=TaskReference.from_json(obj["reference"]),
            deadline_ms=obj["deadline_ms"],
            history_window=obj.get("history_window", 5),
        )


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_log(path: str | Path, header: LogHeader, records: Iterable[SessionRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_dump_line(header.to_json()))
        for record in records:
            fh.write(_dump_line(record.to_json()))


def read_log(path: str | Path) -> tuple[LogHeader, list[SessionRecord]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CorruptLog("empty log file")
    records: list[SessionRecord] = []
    header: LogHeader | None = None
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if n == 1:
                header = LogHeader.from_json(obj)
            else:
                records.append(SessionRecord.from_json(obj))
        except CorruptLog:
            raise
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptLog(f"line {n}: {exc}") from None
    assert header is not None
    return header, records


# --- the session --------------------------------------------------------------


class Session:
    """One training session: a single logical writer owning all loop state."""

    def __init__(
        self,
        config: SessionConfig,
        *,
        backend=None,
        index: FlatIndex | None = None,
        embedder=None,
        device=None,
        clock: Callable[[], float] | None = None,
        control_source: Callable[[], ControlInput] | None = None,
        on_record: Callable[[SessionRecord], None] | None = None,
    ):
        self.config = config
        self.on_record = on_record
        self._interactive = control_source is not None

        if config.telemetry_path is None:
            self.scenario = config.scenario or builtin_scenario(
                config.task_id, config.condition, config.variant
            )
            reference = self.scenario.reference
        else:
            self.scenario = None
            reference = TaskReference.from_json(
                {"altitude_ft": 4500.0, "heading_deg": 90.0, "ias_kt": 110.0}
            )
        self.reference = reference
        self.spec = load_task_spec(config.task_id, reference=reference)
        self.tracker = PhaseTracker(self.spec, history_window=config.history_window)

        self.profile = config.calibration or default_profile()
        self.gate = SafetyGate(self.profile)
        self.device = None
        if config.assist:
            self.device = device if device is not None else open_device(config.device)

        backend = backend or make_backend(config.backend, config.backend_config)
        if clock is None:
            # batch oracle runs use a null clock so logs are reproducible
            clock = time.perf_counter if (self._interactive or config.backend != "oracle") else (lambda: 0.0)
        if embedder is None:
            embedder = HashEmbedder()
        if index is None:
            if config.index_path:
                index = FlatIndex.load(config.index_path)
            else:
                index = build_index(load_corpus(default_corpus_dir()), embedder)
        self.pipeline = GuidancePipeline(
            backend, index=index, embedder=embedder,
            deadline_ms=config.deadline_ms, clock=clock,
        )

        self.sim = None
        if self.scenario is not None:
            self.sim = SimSession(
                self.scenario,
                skill=config.skill,
                params=DEFAULT_PARAMS,
                seed=config.seed,
                control_source=control_source,
            )
        self.records: list[SessionRecord] = []
        self._last_tick = 0

    def header(self) -> LogHeader:
        return LogHeader(
            task_id=self.config.task_id,
            condition=self.config.condition,
            variant=self.config.variant,
            backend=self.config.backend,
            assist=self.config.assist,
            seed=self.config.seed,
            scenario_name=self.scenario.name if self.scenario else "external",
            reference=self.reference,
            deadline_ms=self.config.deadline_ms,
            history_window=self.config.history_window,
        )

    # one tick ------------------------------------------------------------

    def process_tick(
        self,
        telemetry: TelemetryRecord,
        control: ControlInput | None = None,
        sim_flags: Iterable[str] = (),
    ) -> tuple[SessionRecord, list[EmsCommand]]:
        if telemetry.tick != self._last_tick + 1:
            raise SessionError(
                f"tick {telemetry.tick} does not follow {self._last_tick} (exactly-once records)"
            )
        self._last_tick = telemetry.tick

        report, event = self.tracker.observe(telemetry.state)
        result = self.pipeline.run(telemetry.state, report, event, self.config.task_id)

        flags = list(sim_flags)
        if result.align_degraded:
            flags.append("align_degraded")
        if result.deadline_exceeded:
            flags.append("deadline_exceeded")

        commands: list[EmsCommand] = []
        command_logs: list[CommandLog] = []
        voice: list[VoiceEvent] = []
        packet = result.packet
        if (
            self.config.assist
            and packet is not None
            and packet.trigger is not None
            and not result.deadline_exceeded
        ):
            if packet.stick_op is not None:
                duration = (
                    self.config.prestart_duration_ms
                    if packet.trigger == "pre_start"
                    else self.config.correction_duration_ms
                )
                channel = map_direction(packet.stick_op)
                envelope = synthesize(
                    select_mode(packet.trigger),
                    packet.stick_op.magnitude,
                    duration,
                    self.profile,
                    channel,
                )
                command = EmsCommand(
                    channel=channel,
                    envelope=envelope,
                    start_tick=telemetry.tick,
                    purpose=packet.trigger,
                )
                decision = self.gate.check(command, start_s=float(telemetry.tick))
                if decision.outcome == "rejected":
                    flags.append(f"gate_rejected:{decision.reason}")
                else:
                    gated = decision.command
                    frame = encode_frame(gated, self.profile)
                    if self.device is not None:
                        self.device.send(frame)
                    commands.append(gated)
                    command_logs.append(
                        CommandLog(
                            channel=gated.channel,
                            mode=gated.envelope.mode,
                            peak_fraction=gated.peak_fraction,
                            peak_ma=decision.peak_ma,
                            duration_ms=gated.envelope.duration_ms,
                            start_tick=telemetry.tick,
                            purpose=gated.purpose,
                            gate=decision.outcome,
                            frame_hex=frame.hex(),
                        )
                    )
            if packet.trigger == "correction":
                voice = [VoiceEvent(telemetry.tick, instr) for instr in packet.instruments]

        record = SessionRecord(
            tick=telemetry.tick,
            state=telemetry.state,
            control=control,
            report=report,
            phase=report.phase,
            phase_transition=event is not None,
            transition=(
                {
                    "phase": event.phase,
                    "tendency": (
                        {"axis": event.tendency.axis, "direction": event.tendency.direction}
                        if event.tendency
                        else None
                    ),
                }
                if event
                else None
            ),
            align={
                "query": result.query,
                "chunk_ids": list(result.provenance),
                "degraded": result.align_degraded,
            },
            stages={
                name: StageLog(ok=o.ok, raw=o.raw, error=o.error, latency_ms=o.latency_ms)
                for name, o in result.stages.items()
            },
            status=result.stages["status"].parsed if result.stages["status"].ok else None,
            guidance_text=result.guidance_text,
            packet=result.stages["format"].parsed if result.stages["format"].ok else None,
            commands=command_logs,
            voice=voice,
            verdict=ValidatorVerdict(False, False, False),
            flags=flags,
            deadline_exceeded=result.deadline_exceeded,
            latency_ms=result.total_ms,
        )
        record.verdict = validate_record(record)
        self.records.append(record)
        if self.on_record:
            self.on_record(record)
        return record, commands

    @staticmethod
    def nudge_windows(commands: Iterable[EmsCommand]) -> tuple[NudgeWindow, ...]:
        """Convert emitted commands into next-second stick suggestions."""
        windows = []
        for cmd in commands:
            sx, sy = NUDGE_SIGNS[cmd.channel]
            scale = 0.35
            windows.append(
                NudgeWindow(
                    start_s=float(cmd.start_tick),
                    duration_s=cmd.envelope.duration_ms / 1000.0,
                    dx=sx * scale,
                    dy=sy * scale,
                    amplitude=cmd.envelope.value_at,
                )
            )
        return tuple(windows)

    # whole session ---------------------------------------------------------

    def run(self) -> list[SessionRecord]:
        if self.scenario is not None:
            nudges: tuple[NudgeWindow, ...] = ()
            for _ in range(self.scenario.duration_s):
                telemetry, control, sim_flags = self.sim.tick(self.tracker.targets(), nudges)
                record, commands = self.process_tick(telemetry, control, sim_flags)
                if self.config.assist and self.sim.trainee is not None:
                    nudges = self.nudge_windows(commands)
                if self.sim.touched_down:
                    break
        else:
            prev = None
            for line in Path(self.config.telemetry_path).read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                telemetry = parse_telemetry_line(line, prev_tick=prev)
                prev = telemetry.tick
                self.process_tick(telemetry)
        if self.config.log_path:
            write_log(self.config.log_path, self.header(), self.records)
        return self.records


def run_session(config: SessionConfig, **kwargs) -> list[SessionRecord]:
    """Build and run one session; returns its records (and writes the log)."""
    return Session(config, **kwargs).run()


# --- replay -------------------------------------------------------------------


@dataclass
class ReplayReport:
    record_count: int
    mismatches: list[dict]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def replay(path: str | Path) -> ReplayReport:
    """Re-derive reports and verdicts from a log's states and stage outputs.

    Any difference against the stored values is an integrity failure:
    either the log was tampered with or the code that wrote it disagrees
    with the code replaying it.
    """
    header, records = read_log(path)
    spec = load_task_spec(header.task_id, reference=header.reference)
    tracker = PhaseTracker(spec, history_window=header.history_window)
    mismatches: list[dict] = []

    for i, record in enumerate(records, start=1):
        if record.tick != i:
            mismatches.append({"tick": record.tick, "kind": "tick_sequence",
                               "detail": f"expected {i}"})
        report, event = tracker.observe(record.state)
        if report.to_json() != record.report.to_json():
            mismatches.append({"tick": record.tick, "kind": "report",
                               "detail": "recomputed deviation report differs"})
        if (event is not None) != record.phase_transition:
            mismatches.append({"tick": record.tick, "kind": "phase_transition",
                               "detail": "recomputed transition flag differs"})
        verdict = validate_record(record)
        if verdict.to_json() != record.verdict.to_json():
            mismatches.append({"tick": record.tick, "kind": "verdict",
                               "detail": f"recomputed {verdict.to_json()}"})
    return ReplayReport(record_count=len(records), mismatches=mismatches)
