"""Three-stage guidance chain with pluggable model backends.

Per tick: retrieve knowledge context (align), run a status check and a
guidance generation call (analyze), then a formatting call that turns the
guidance into a structured device packet (adjust input). Every stage is a
model call against a versioned JSON response schema; a stage that fails
(timeout, transport, malformed output) degrades that tick to no-guidance
rather than propagating.

Two backends: a deterministic rule-based oracle (offline, reproducible)
and a remote chat-completion client with schema-constrained responses.
The validator scores a finished tick record against three criteria:
C1 all stages completed, C2 every output schema-valid, C3 output
consistent with the flight state (status vs envelope flags, correction
direction opposing the worst deviation, instrument naming, pre-start only
at phase transitions).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Protocol

import jsonschema

from .flight_state import FlightState
from .knowledge_base import (
    EmptyIndex,
    FlatIndex,
    EmbeddingProvider,
    KnowledgeBaseError,
    build_context,
)
from .task_standards import DeviationReport, PhaseStart


class PipelineError(Exception):
    pass


class BackendTimeout(PipelineError):
    pass


class ProviderUnavailable(PipelineError):
    pass


class MalformedResponse(PipelineError):
    pass


class InvariantViolation(PipelineError):
    pass


STAGES = ("status", "guidance", "format")

PROMPT_VERSION = "v1"

# Control-axis mapping: which stick axis corrects a metric. Airspeed has
# no stick axis (it is a power problem) and is voiced only.
CONTROL_AXIS: dict[str, str | None] = {
    "bank_deg": "x",
    "heading_deg": "x",
    "altitude_ft": "y",
    "pitch_deg": "y",
    "vs_fpm": "y",
    "ias_kt": None,
    "gs_kt": None,
}

INSTRUMENT_FOR = {
    "altitude_ft": "altimeter",
    "bank_deg": "attitude indicator",
    "pitch_deg": "attitude indicator",
    "heading_deg": "heading indicator",
    "ias_kt": "airspeed indicator",
    "gs_kt": "airspeed indicator",
    "vs_fpm": "vertical speed indicator",
}

INSTRUMENT_VOCABULARY = (
    "altimeter",
    "attitude indicator",
    "airspeed indicator",
    "heading indicator",
    "vertical speed indicator",
)

METRIC_WORDS = {
    "altitude_ft": "altitude",
    "bank_deg": "bank angle",
    "heading_deg": "heading",
    "ias_kt": "airspeed",
    "gs_kt": "ground speed",
    "vs_fpm": "vertical speed",
    "pitch_deg": "pitch",
}

FIRM_RATIO = 1.2  # deviation/tolerance at which a correction becomes firm
CRITICAL_RATIO = 3.0


def _load_text(name: str) -> str:
    return resources.files("aerocoach").joinpath(f"data/prompts/{name}").read_text("utf-8")


def _load_schema(name: str) -> dict:
    raw = resources.files("aerocoach").joinpath(f"data/schemas/{name}").read_text("utf-8")
    return json.loads(raw)


_PROMPTS = {stage: _load_text(f"{stage}.{PROMPT_VERSION}.txt") for stage in STAGES}
_SCHEMAS = {stage: _load_schema(f"{stage}.{PROMPT_VERSION}.schema.json") for stage in STAGES}
_VALIDATORS = {stage: jsonschema.Draft7Validator(schema) for stage, schema in _SCHEMAS.items()}


def stage_schema(stage: str) -> dict:
    return _SCHEMAS[stage]


# --- wire types --------------------------------------------------------------


@dataclass(frozen=True)
class StickOp:
    axis: str  # "x" | "y"
    direction: str  # "+" | "-"
    magnitude: str  # "light" | "firm"


@dataclass(frozen=True)
class StatusCheck:
    tick: int
    status: str  # "nominal" | "deviation" | "critical"
    worst_metric: str | None
    assessments: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class GuidancePacket:
    tick: int
    stick_op: StickOp | None
    ems_mode: int | None
    trigger: str | None  # "pre_start" | "correction" | None (maintain)
    instruments: tuple[str, ...]
    rationale: str
    provenance: tuple[str, ...] = ()


@dataclass(frozen=True)
class BackendRequest:
    stage: str
    system_prompt: str
    payload: dict
    schema: dict
    schema_id: str
    deadline_s: float | None = None


@dataclass(frozen=True)
class ValidatorVerdict:
    c1: bool  # all three stage outputs present
    c2: bool  # every present output schema-valid and structurally coherent
    c3: bool  # consistent with the flight state
    reasons: tuple[str, ...] = ()

    @property
    def overall(self) -> bool:
        return self.c1 and self.c2 and self.c3

    def to_json(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "overall": self.overall,
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ValidatorVerdict":
        return cls(
            c1=obj["c1"], c2=obj["c2"], c3=obj["c3"], reasons=tuple(obj.get("reasons", []))
        )


class Backend(Protocol):
    backend_id: str

    def complete(self, request: BackendRequest) -> str: ...


# --- packet construction ------------------------------------------------------


def packet_from_payload(
    parsed: dict, tick: int, provenance: tuple[str, ...] = ()
) -> GuidancePacket:
    """Build a GuidancePacket from a schema-valid stage-3 payload.

    Raises InvariantViolation when the payload is structurally incoherent
    (wrong mode for its trigger, correction without instruments, actuation
    without a trigger).
    """
    trigger = parsed["trigger"]
    mode = parsed["ems_mode"]
    op = parsed["stick_op"]
    instruments = tuple(parsed["instruments"])
    if trigger == "pre_start" and mode != 3:
        raise InvariantViolation(f"pre_start requires mode 3, got {mode}")
    if trigger == "correction":
        if mode != 2:
            raise InvariantViolation(f"correction requires mode 2, got {mode}")
        if not instruments:
            raise InvariantViolation("correction requires at least one instrument")
    if trigger is None and (mode is not None or op is not None):
        raise InvariantViolation("maintain packet must not carry a mode or stick operation")
    return GuidancePacket(
        tick=tick,
        stick_op=StickOp(**op) if op else None,
        ems_mode=mode,
        trigger=trigger,
        instruments=instruments,
        rationale=parsed["rationale"],
        provenance=provenance,
    )


# --- backends -----------------------------------------------------------------


class OracleBackend:
    """Deterministic rule-based stand-in mirroring the remote contract.

    Consumes the same requests and produces raw JSON text that is parsed
    and schema-validated exactly like a remote reply, so the whole
    pipeline (C2 included) is exercised offline.
    """

    backend_id = "oracle"

    def complete(self, request: BackendRequest) -> str:
        p = request.payload
        if request.stage == "status":
            return json.dumps(self._status(p), sort_keys=True)
        if request.stage == "guidance":
            return json.dumps(self._guidance(p), sort_keys=True)
        if request.stage == "format":
            return json.dumps(self._format(p), sort_keys=True)
        raise ValueError(f"unknown stage: {request.stage}")

    @staticmethod
    def _worst_ratio(p: dict) -> float:
        worst = p.get("worst")
        for d in p.get("deviations", []):
            if d["metric"] == worst:
                return abs(d["deviation"]) / d["tolerance"] * d.get("severity", 1.0)
        return 0.0

    def _status(self, p: dict) -> dict:
        assessments = {}
        for d in p.get("deviations", []):
            name = METRIC_WORDS.get(d["metric"], d["metric"])
            if d["in_band"]:
                assessments[d["metric"]] = f"{name} within limits"
            else:
                side = "high" if d["deviation"] > 0 else "low"
                assessments[d["metric"]] = (
                    f"{name} {side} by {abs(d['deviation']):.1f} (tolerance {d['tolerance']:.1f})"
                )
        if p.get("all_in_band", True):
            status = "nominal"
        elif self._worst_ratio(p) >= CRITICAL_RATIO:
            status = "critical"
        else:
            status = "deviation"
        return {"status": status, "worst_metric": p.get("worst"), "assessments": assessments}

    def _guidance(self, p: dict) -> dict:
        worst = p.get("worst")
        if worst is None:
            phase = p.get("phase", "the current phase")
            return {
                "guidance": f"Hold the current attitude and keep the scan going through {phase}.",
                "focus_metric": None,
            }
        dev = next(d for d in p["deviations"] if d["metric"] == worst)
        name = METRIC_WORDS.get(worst, worst)
        instrument = INSTRUMENT_FOR.get(worst, "attitude indicator")
        axis = CONTROL_AXIS.get(worst)
        if axis == "x":
            motion = "stick left" if dev["deviation"] > 0 else "stick right"
        elif axis == "y":
            motion = "ease forward pressure" if dev["deviation"] > 0 else "apply back pressure"
        else:
            motion = "adjust power"
        side = "high" if dev["deviation"] > 0 else "low"
        return {
            "guidance": f"{name} is {side}: {motion} and confirm on the {instrument}.",
            "focus_metric": worst,
        }

    def _format(self, p: dict) -> dict:
        transition = p.get("transition")
        if transition:
            tendency = transition.get("tendency")
            return {
                "stick_op": (
                    {"axis": tendency["axis"], "direction": tendency["direction"],
                     "magnitude": "light"}
                    if tendency
                    else None
                ),
                "ems_mode": 3,
                "trigger": "pre_start",
                "instruments": [],
                "rationale": f"prepare for {transition['phase']}",
            }
        worst = p.get("worst")
        if worst is not None:
            dev = next(d for d in p["deviations"] if d["metric"] == worst)
            axis = CONTROL_AXIS.get(worst)
            magnitude = "firm" if self._worst_ratio(p) >= FIRM_RATIO else "light"
            return {
                "stick_op": (
                    {"axis": axis, "direction": "-" if dev["deviation"] > 0 else "+",
                     "magnitude": magnitude}
                    if axis
                    else None
                ),
                "ems_mode": 2,
                "trigger": "correction",
                "instruments": [INSTRUMENT_FOR.get(worst, "attitude indicator")],
                "rationale": f"correct {METRIC_WORDS.get(worst, worst)} opposite the deviation",
            }
        return {
            "stick_op": None,
            "ems_mode": None,
            "trigger": None,
            "instruments": [],
            "rationale": "maintain",
        }


class RemoteBackend:
    """Chat-completion client with JSON-schema-constrained responses."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        timeout_s: float = 10.0,
        max_retries: int = 2,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backend_id = f"remote:{model}"

    def complete(self, request: BackendRequest) -> str:
        import requests

        timeout = self.timeout_s
        if request.deadline_s is not None:
            timeout = min(timeout, max(request.deadline_s, 0.05))
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": json.dumps(request.payload)},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": request.schema_id.replace(".", "_"),
                    "schema": request.schema,
                    "strict": True,
                },
            },
        }
        last_exc: Exception | None = None
        for _ in range(self.max_retries + 1):
            try:
                resp = requests.post(self.endpoint, json=body, headers=headers, timeout=timeout)
            except requests.Timeout as exc:
                raise BackendTimeout(f"{request.stage}: {exc}") from None
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"{request.stage}: HTTP {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise MalformedResponse(f"{request.stage}: bad completion body: {exc}") from None
        raise ProviderUnavailable(f"{request.stage}: transport failed after retries: {last_exc}")


def make_backend(name: str, config: dict | None = None) -> Backend:
    """Backend factory for CLI/config use: 'oracle' or 'remote'."""
    if name == "oracle":
        return OracleBackend()
    if name == "remote":
        cfg = config or {}
        endpoint = cfg.get("endpoint", "")
        if not endpoint:
            raise ProviderUnavailable("remote backend requires backend.endpoint in config")
        import os

        key = cfg.get("api_key") or os.environ.get(cfg.get("api_key_env", "AEROCOACH_API_KEY"), "")
        return RemoteBackend(
            endpoint=endpoint,
            model=cfg.get("model", "gpt-4o-2024-08-06"),
            api_key=key,
            timeout_s=float(cfg.get("timeout_s", 10.0)),
        )
    raise ValueError(f"unknown backend: {name}")


# --- the pipeline -------------------------------------------------------------


@dataclass
class StageOutcome:
    stage: str
    ok: bool
    raw: str | None = None
    parsed: dict | None = None
    error: str | None = None
    latency_ms: float = 0.0


@dataclass
class PipelineResult:
    query: str
    context: str
    provenance: tuple[str, ...]
    align_degraded: bool
    stages: dict[str, StageOutcome]
    status: StatusCheck | None
    guidance_text: str | None
    packet: GuidancePacket | None
    total_ms: float
    deadline_exceeded: bool


class GuidancePipeline:
    """Align -> analyze (status, guidance) -> format, under one tick deadline.

    A failed stage prevents later stages in the same tick; on any failure
    or deadline overrun no actuation packet is surfaced (fail-silent).
    """

    def __init__(
        self,
        backend: Backend,
        index: FlatIndex | None = None,
        embedder: EmbeddingProvider | None = None,
        retrieval_k: int = 3,
        context_budget: int = 1200,
        deadline_ms: float = 800.0,
        clock: Callable[[], float] | None = None,
    ):
        self.backend = backend
        self.index = index
        self.embedder = embedder
        self.retrieval_k = retrieval_k
        self.context_budget = context_budget
        self.deadline_ms = deadline_ms
        self.clock = clock if clock is not None else time.perf_counter

    # Align: build a retrieval query from task, phase, and worst offender.

    def build_query(self, task_id: str, report: DeviationReport) -> str:
        task_words = task_id.replace("_", " ")
        phase_words = report.phase.replace("_", " ")
        if report.worst is not None:
            return f"{task_words} {phase_words} correct {METRIC_WORDS.get(report.worst, report.worst)}"
        return f"{task_words} {phase_words} maintain procedure"

    def stage_align(self, report: DeviationReport, task_id: str) -> tuple[str, str, tuple[str, ...], bool]:
        query = self.build_query(task_id, report)
        if self.index is None or self.embedder is None:
            return query, "", (), True
        try:
            hits = self.index.search(self.embedder.embed(query), self.retrieval_k)
            context, provenance = build_context(hits, self.context_budget)
            return query, context, tuple(provenance), False
        except (EmptyIndex, KnowledgeBaseError):
            return query, "", (), True

    def _call(self, stage: str, payload: dict, deadline_s: float | None) -> StageOutcome:
        request = BackendRequest(
            stage=stage,
            system_prompt=_PROMPTS[stage],
            payload=payload,
            schema=_SCHEMAS[stage],
            schema_id=f"{stage}.{PROMPT_VERSION}",
            deadline_s=deadline_s,
        )
        t0 = self.clock()
        try:
            raw = self.backend.complete(request)
        except BackendTimeout as exc:
            return StageOutcome(stage, False, error=f"timeout: {exc}",
                                latency_ms=(self.clock() - t0) * 1000.0)
        except (ProviderUnavailable, MalformedResponse) as exc:
            return StageOutcome(stage, False, error=f"{type(exc).__name__}: {exc}",
                                latency_ms=(self.clock() - t0) * 1000.0)
        latency_ms = (self.clock() - t0) * 1000.0
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            return StageOutcome(stage, False, raw=raw, error=f"not JSON: {exc}",
                                latency_ms=latency_ms)
        errors = sorted(_VALIDATORS[stage].iter_errors(parsed), key=str)
        if errors:
            return StageOutcome(stage, False, raw=raw, parsed=None,
                                error=f"schema: {errors[0].message}", latency_ms=latency_ms)
        return StageOutcome(stage, True, raw=raw, parsed=parsed, latency_ms=latency_ms)

    def run(
        self,
        state: FlightState,
        report: DeviationReport,
        transition: PhaseStart | None,
        task_id: str,
    ) -> PipelineResult:
        t_start = self.clock()
        deadline_s = self.deadline_ms / 1000.0

        def remaining() -> float:
            return deadline_s - (self.clock() - t_start)

        query, context, provenance, degraded = self.stage_align(report, task_id)

        base_payload = {
            "tick": report.tick,
            "task": task_id,
            "phase": report.phase,
            "state": state.as_metrics(),
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
                for d in report.deviations
            ],
            "worst": report.worst,
            "all_in_band": report.all_in_band,
            "trends": list(report.trends),
            "transition": (
                {
                    "phase": transition.phase,
                    "tendency": (
                        {"axis": transition.tendency.axis,
                         "direction": transition.tendency.direction}
                        if transition.tendency
                        else None
                    ),
                }
                if transition
                else None
            ),
        }

        stages: dict[str, StageOutcome] = {}
        status: StatusCheck | None = None
        guidance_text: str | None = None
        packet: GuidancePacket | None = None
        deadline_exceeded = False

        def out_of_time(stage: str) -> bool:
            if remaining() <= 0.0:
                stages[stage] = StageOutcome(stage, False, error="deadline_exceeded")
                return True
            return False

        # stage 1: status check (raw state only, no retrieved context)
        if not out_of_time("status"):
            outcome = self._call("status", base_payload, remaining())
            stages["status"] = outcome
            if outcome.ok:
                status = StatusCheck(
                    tick=report.tick,
                    status=outcome.parsed["status"],
                    worst_metric=outcome.parsed["worst_metric"],
                    assessments=tuple(sorted(outcome.parsed["assessments"].items())),
                )

        # stage 2: guidance generation (context-grounded)
        if "status" in stages and stages["status"].ok and not out_of_time("guidance"):
            payload = dict(base_payload)
            payload["status"] = stages["status"].parsed
            payload["context"] = context
            outcome = self._call("guidance", payload, remaining())
            stages["guidance"] = outcome
            if outcome.ok:
                guidance_text = outcome.parsed["guidance"]

        # stage 3: structured formatting
        if "guidance" in stages and stages["guidance"].ok and not out_of_time("format"):
            payload = dict(base_payload)
            payload["guidance"] = guidance_text
            payload["context"] = context
            outcome = self._call("format", payload, remaining())
            if outcome.ok:
                try:
                    packet = packet_from_payload(outcome.parsed, report.tick, provenance)
                except InvariantViolation as exc:
                    outcome = StageOutcome(
                        outcome.stage, False, raw=outcome.raw, parsed=outcome.parsed,
                        error=f"invariant: {exc}", latency_ms=outcome.latency_ms,
                    )
            stages["format"] = outcome

        total_ms = (self.clock() - t_start) * 1000.0
        if total_ms > self.deadline_ms:
            deadline_exceeded = True
            packet = None  # late result: discarded, never actuated
        for stage in STAGES:
            stages.setdefault(stage, StageOutcome(stage, False, error="not_run"))

        return PipelineResult(
            query=query,
            context=context,
            provenance=provenance,
            align_degraded=degraded,
            stages=stages,
            status=status,
            guidance_text=guidance_text,
            packet=packet,
            total_ms=total_ms,
            deadline_exceeded=deadline_exceeded,
        )


# --- validator ----------------------------------------------------------------


class RecordLike(Protocol):
    """What the validator needs from one tick record."""

    report: DeviationReport
    phase_transition: bool

    def stage_raw(self, stage: str) -> str | None: ...


def _parse_if_valid(stage: str, raw: str | None) -> dict | None:
    if raw is None:
        return None
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError:
        return None
    if next(_VALIDATORS[stage].iter_errors(parsed), None) is not None:
        return None
    return parsed


def validate_record(record: RecordLike) -> ValidatorVerdict:
    """Score one tick record against the three correctness criteria.

    Works from the stored raw stage outputs, never from pre-parsed
    payloads, so replay and evaluation recompute everything.
    """
    reasons: list[str] = []
    raws = {stage: record.stage_raw(stage) for stage in STAGES}

    c1 = all(raws[stage] is not None for stage in STAGES)
    if not c1:
        missing = [s for s in STAGES if raws[s] is None]
        reasons.append(f"c1: missing stages {missing}")

    c2 = True
    parsed: dict[str, dict | None] = {}
    for stage in STAGES:
        if raws[stage] is None:
            parsed[stage] = None
            continue
        p = _parse_if_valid(stage, raws[stage])
        parsed[stage] = p
        if p is None:
            c2 = False
            reasons.append(f"c2: stage {stage} output not schema-valid")
    if parsed["format"] is not None:
        try:
            packet_from_payload(parsed["format"], record.report.tick)
        except InvariantViolation as exc:
            c2 = False
            reasons.append(f"c2: packet invariant: {exc}")
            parsed["format"] = None

    c3 = True
    report = record.report
    if parsed["status"] is not None:
        nominal = parsed["status"]["status"] == "nominal"
        if nominal != report.all_in_band:
            c3 = False
            reasons.append("c3: status does not match envelope flags")
    pkt = parsed["format"]
    if pkt is not None:
        trigger = pkt["trigger"]
        if report.all_in_band and trigger == "correction":
            c3 = False
            reasons.append("c3: correction emitted with all metrics in band")
        if trigger == "pre_start" and not record.phase_transition:
            c3 = False
            reasons.append("c3: pre_start outside a phase transition")
        if trigger == "correction":
            worst = report.worst
            if worst is None:
                c3 = False
                reasons.append("c3: correction without a worst offender")
            else:
                expected_instr = INSTRUMENT_FOR.get(worst)
                if set(pkt["instruments"]) != {expected_instr}:
                    c3 = False
                    reasons.append(
                        f"c3: instruments {pkt['instruments']} do not name {expected_instr}"
                    )
                axis = CONTROL_AXIS.get(worst)
                op = pkt["stick_op"]
                dev = report.dev(worst)
                if axis is None:
                    if op is not None:
                        c3 = False
                        reasons.append(f"c3: {worst} has no stick axis but stick_op present")
                elif op is None:
                    c3 = False
                    reasons.append("c3: correction missing its stick operation")
                else:
                    if op["axis"] != axis:
                        c3 = False
                        reasons.append(f"c3: stick axis {op['axis']} != {axis} for {worst}")
                    expected_dir = "-" if dev is not None and dev.deviation > 0 else "+"
                    if op["direction"] != expected_dir:
                        c3 = False
                        reasons.append("c3: stick direction does not oppose the deviation")

    return ValidatorVerdict(c1=c1, c2=c2, c3=c3, reasons=tuple(reasons))
