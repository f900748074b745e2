"""Desk-scale fixed-wing flight model, synthetic trainee, and scenario runner.

A 3-DOF point-mass model with attitude kinematics: enough fidelity to
exercise every training metric group (altitude, attitude, speeds,
accelerations) without aerodynamic realism. Heading follows the
coordinated-turn law psi_dot = g·tan(bank)/V; climb comes from the
flight-path angle (pitch minus a speed/load-dependent angle of attack);
speed from the thrust/drag balance.

Integration is fixed-step RK4 at 20 Hz substeps, sampled at 1 Hz for
telemetry, so runs are deterministic bit-for-bit given (scenario, skill,
seed). Indicated airspeed is treated as true airspeed at these altitudes.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .flight_state import (
    ControlInput,
    FlightState,
    TelemetryRecord,
    heading_delta,
    normalize_state,
    wrap_heading,
    wrap_signed,
)
from .task_standards import PhaseTargets, PhaseTracker, TaskReference, load_task_spec

G = 9.80665  # m/s^2
KT_TO_MS = 0.514444
FT_TO_M = 0.3048
MS_TO_FPM = 196.850394

ALPHA_MAX_RAD = 0.26  # angle-of-attack cap; past this the wing is stalled
V_MIN_MS = 15.0  # below this there is no turn authority and alpha is capped
ROLL_FRICTION = 0.04


class SimError(Exception):
    pass


class NonFiniteState(SimError):
    """Integration produced NaN/Inf; indicates a bug, not a flight condition."""


class TrimNotFound(SimError):
    pass


@dataclass(frozen=True, slots=True)
class AircraftParams:
    """Point-mass trainer aircraft, loosely sized like a light single."""

    mass_kg: float = 1200.0
    max_thrust_n: float = 2600.0
    drag_k0: float = 0.274  # parasite drag, N per (m/s)^2
    drag_k1: float = 7.1e5  # induced drag, N·(m/s)^2 (scaled by load factor^2)
    lift_alpha_coeff: float = 140.0  # alpha_rad = coeff · n / V^2
    roll_rate_max_dps: float = 45.0
    pitch_rate_max_dps: float = 10.0
    stall_ias_kt: float = 49.0
    envelope_max_ias_kt: float = 170.0


DEFAULT_PARAMS = AircraftParams()


@dataclass(frozen=True, slots=True)
class Wind:
    """Disturbance inputs to one integration step."""

    bank_rate_dps: float = 0.0
    updraft_ms: float = 0.0
    thrust_factor: float = 1.0
    lat_accel_g: float = 0.0


CALM = Wind()

DISTURBANCE_KINDS = ("lateral_gust", "updraft", "throttle_decay")


@dataclass(frozen=True, slots=True)
class Disturbance:
    """A timed abnormal-condition injection.

    magnitude meaning by kind: lateral_gust = bank rate in deg/s,
    updraft = vertical air motion in m/s (negative = sink),
    throttle_decay = multiplicative thrust factor in (0, 1].
    """

    kind: str
    start_s: float
    duration_s: float
    magnitude: float

    def active(self, t: float) -> bool:
        return self.start_s <= t < self.start_s + self.duration_s


@dataclass(frozen=True)
class Scenario:
    task_id: str
    condition: str  # "normal" | "abnormal"
    initial: FlightState
    duration_s: int
    reference: TaskReference
    disturbances: tuple[Disturbance, ...] = ()
    ground_elev_ft: float = 0.0
    throttle_available: bool = True
    name: str = ""

    def __post_init__(self):
        if self.condition == "abnormal" and not self.disturbances:
            raise ValueError("abnormal scenario requires at least one disturbance")
        if self.condition == "normal" and self.disturbances:
            raise ValueError("normal scenario must not carry disturbances")

    def wind_at(self, t: float) -> Wind:
        bank_rate = 0.0
        updraft = 0.0
        thrust = 1.0
        lat_g = 0.0
        for d in self.disturbances:
            if not d.active(t):
                continue
            if d.kind == "lateral_gust":
                bank_rate += d.magnitude
                lat_g += d.magnitude / 40.0  # slip signature of the gust
            elif d.kind == "updraft":
                updraft += d.magnitude
            elif d.kind == "throttle_decay":
                thrust *= d.magnitude
        if bank_rate == 0.0 and updraft == 0.0 and thrust == 1.0:
            return CALM
        return Wind(bank_rate, updraft, thrust, lat_g)

    def disturbance_active(self, t: float) -> bool:
        return any(d.active(t) for d in self.disturbances)

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "condition": self.condition,
            "name": self.name,
            "duration_s": self.duration_s,
            "ground_elev_ft": self.ground_elev_ft,
            "throttle_available": self.throttle_available,
            "initial": {"t": self.initial.t, **self.initial.as_metrics()},
            "reference": self.reference.to_json(),
            "disturbances": [
                {
                    "kind": d.kind,
                    "start_s": d.start_s,
                    "duration_s": d.duration_s,
                    "magnitude": d.magnitude,
                }
                for d in self.disturbances
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        init = obj["initial"]
        state = normalize_state(init, t=float(init.get("t", 0.0)))
        return cls(
            task_id=obj["task_id"],
            condition=obj["condition"],
            initial=state,
            duration_s=int(obj["duration_s"]),
            reference=TaskReference.from_json(obj["reference"]),
            disturbances=tuple(
                Disturbance(d["kind"], d["start_s"], d["duration_s"], d["magnitude"])
                for d in obj.get("disturbances", [])
            ),
            ground_elev_ft=obj.get("ground_elev_ft", 0.0),
            throttle_available=obj.get("throttle_available", True),
            name=obj.get("name", ""),
        )


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_json(), indent=2) + "\n", encoding="utf-8")


# --- dynamics -------------------------------------------------------------


def _alpha_rad(v: float, load: float, params: AircraftParams) -> float:
    if v < V_MIN_MS:
        return ALPHA_MAX_RAD
    return min(params.lift_alpha_coeff * load / (v * v), ALPHA_MAX_RAD)


def _derivatives(
    y: tuple[float, float, float, float, float],
    inp: ControlInput,
    params: AircraftParams,
    wind: Wind,
    ground_m: float,
) -> tuple[float, float, float, float, float]:
    """d/dt of (h_m, v_ms, psi_rad, phi_rad, theta_rad)."""
    h, v, _psi, phi, theta = y
    on_ground = h <= ground_m + 0.05

    phi_dot = math.radians(inp.stick_x * params.roll_rate_max_dps + wind.bank_rate_dps)
    theta_dot = math.radians(inp.stick_y * params.pitch_rate_max_dps)

    phi_eff = max(-1.4, min(1.4, phi))  # ~80 deg cap for load factor
    load = 1.0 / math.cos(phi_eff) if not on_ground else 1.0
    alpha = _alpha_rad(v, load, params)
    gamma = theta - alpha

    thrust = inp.throttle * params.max_thrust_n * wind.thrust_factor

    if on_ground and gamma <= 0.0:
        # rolling: wheels carry the weight (no induced drag), no turn authority
        drag = params.drag_k0 * v * v
        h_dot = 0.0
        v_dot = (thrust - drag - ROLL_FRICTION * params.mass_kg * G) / params.mass_kg
        if v <= 0.0:
            v_dot = max(v_dot, 0.0)
        return (h_dot, v_dot, 0.0, -2.0 * phi, theta_dot)

    v_sq = max(v, 20.0) ** 2  # induced-drag floor; the model is not meant below ~40 kt
    drag = params.drag_k0 * v * v + params.drag_k1 * load * load / v_sq

    psi_dot = G / v * math.tan(phi) if v > V_MIN_MS else 0.0
    h_dot = v * math.sin(gamma) + wind.updraft_ms
    v_dot = (thrust - drag) / params.mass_kg - G * math.sin(gamma)
    return (h_dot, v_dot, psi_dot, phi_dot, theta_dot)


def step(
    state: FlightState,
    inp: ControlInput,
    params: AircraftParams = DEFAULT_PARAMS,
    wind: Wind = CALM,
    dt: float = 0.05,
    ground_elev_ft: float = 0.0,
) -> FlightState:
    """Advance the aircraft by dt seconds (one RK4 step). Pure and deterministic."""
    if not 0.0 < dt <= 1.0:
        raise ValueError(f"dt out of range: {dt}")
    ground_m = ground_elev_ft * FT_TO_M
    y = (
        state.altitude_ft * FT_TO_M,
        state.ias_kt * KT_TO_MS,
        math.radians(state.heading_deg),
        math.radians(state.bank_deg),
        math.radians(state.pitch_deg),
    )

    def add(a, b, s):
        return tuple(ai + bi * s for ai, bi in zip(a, b))

    k1 = _derivatives(y, inp, params, wind, ground_m)
    k2 = _derivatives(add(y, k1, dt / 2), inp, params, wind, ground_m)
    k3 = _derivatives(add(y, k2, dt / 2), inp, params, wind, ground_m)
    k4 = _derivatives(add(y, k3, dt), inp, params, wind, ground_m)
    y1 = tuple(
        yi + dt / 6.0 * (a + 2 * b + 2 * c + d)
        for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    )

    h, v, psi, phi, theta = y1
    h = max(h, ground_m)
    v = max(v, 0.0)
    d_end = _derivatives((h, v, psi, phi, theta), inp, params, wind, ground_m)
    on_ground = h <= ground_m + 0.05

    out = FlightState(
        t=state.t + dt,
        altitude_ft=h / FT_TO_M,
        pitch_deg=wrap_signed(math.degrees(theta)),
        bank_deg=wrap_signed(math.degrees(phi)),
        heading_deg=wrap_heading(math.degrees(psi)),
        ias_kt=v / KT_TO_MS,
        gs_kt=v / KT_TO_MS,
        vs_fpm=d_end[0] * MS_TO_FPM if not on_ground else max(0.0, d_end[0] * MS_TO_FPM),
        accel_lon_g=d_end[1] / G,
        accel_lat_g=wind.lat_accel_g,
        accel_vert_g=(1.0 / math.cos(max(-1.4, min(1.4, phi)))) if not on_ground else 1.0,
    )
    for k, val in out.as_metrics().items():
        if not math.isfinite(val):
            raise NonFiniteState(f"{k} became non-finite at t={state.t}")
    return out


def is_stalled(state: FlightState, params: AircraftParams = DEFAULT_PARAMS) -> bool:
    """Below stall speed while airborne: flagged, not fatal."""
    return 0.0 < state.ias_kt < params.stall_ias_kt and state.vs_fpm != 0.0


def trim_level(
    ias_kt: float,
    altitude_ft: float,
    params: AircraftParams = DEFAULT_PARAMS,
    heading_deg: float = 90.0,
) -> tuple[FlightState, ControlInput]:
    """Closed-form straight-and-level equilibrium at the requested speed.

    The returned (state, input) pair is an exact fixed point of the
    dynamics: holding the input constant keeps altitude within +-5 ft and
    speed within +-1 kt over 60 s.
    """
    if not params.stall_ias_kt * 1.2 <= ias_kt <= params.envelope_max_ias_kt:
        raise TrimNotFound(f"ias {ias_kt:.1f} kt outside trim envelope")
    v = ias_kt * KT_TO_MS
    alpha = _alpha_rad(v, 1.0, params)
    drag = params.drag_k0 * v * v + params.drag_k1 / (v * v)
    throttle = drag / params.max_thrust_n
    if throttle > 1.0:
        raise TrimNotFound(f"thrust insufficient to hold {ias_kt:.1f} kt level")
    state = FlightState(
        t=0.0,
        altitude_ft=altitude_ft,
        pitch_deg=math.degrees(alpha),
        bank_deg=0.0,
        heading_deg=wrap_heading(heading_deg),
        ias_kt=ias_kt,
        gs_kt=ias_kt,
        vs_fpm=0.0,
        accel_lon_g=0.0,
        accel_lat_g=0.0,
        accel_vert_g=1.0,
    )
    return state, ControlInput(0.0, 0.0, throttle)


# --- synthetic trainee ----------------------------------------------------


@dataclass(frozen=True, slots=True)
class TraineeSkill:
    """Controls how far from ideal the synthetic trainee flies.

    compliance is the fraction of an EMS nudge adopted into the control
    input; anything below 1 leaves the trainee able to overpower the cue.
    """

    gain_error: float = 1.0
    reaction_delay_s: float = 0.0
    noise_sigma: float = 0.0
    compliance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError("compliance must be in [0, 1]")
        if self.reaction_delay_s < 0.0:
            raise ValueError("reaction_delay_s must be >= 0")


PERFECT_SKILL = TraineeSkill()
NOVICE_SKILL = TraineeSkill(gain_error=0.6, reaction_delay_s=1.0, noise_sigma=0.08, compliance=0.5)


@dataclass(frozen=True, slots=True)
class NudgeWindow:
    """A stick-delta suggestion active over [start_s, start_s + duration_s).

    amplitude(t_rel) scales the delta over the window, mirroring the EMS
    envelope that produced it.
    """

    start_s: float
    duration_s: float
    dx: float
    dy: float
    amplitude: Callable[[float], float] | None = None

    def delta_at(self, t: float) -> tuple[float, float]:
        rel = t - self.start_s
        if not 0.0 <= rel < self.duration_s:
            return (0.0, 0.0)
        a = self.amplitude(rel) if self.amplitude is not None else 1.0
        return (self.dx * a, self.dy * a)


class SyntheticTrainee:
    """PD-style pilot flying toward phase targets, degraded by skill.

    Perception of the aircraft lags by reaction_delay_s (snapshots taken
    at tick boundaries); control noise is redrawn once per tick.
    """

    def __init__(self, skill: TraineeSkill, rng: random.Random):
        self.skill = skill
        self.rng = rng
        delay_ticks = math.ceil(skill.reaction_delay_s)
        self._snapshots: deque[FlightState] = deque(maxlen=max(delay_ticks + 1, 1))
        self._noise = (0.0, 0.0)
        self._throttle: float | None = None

    def begin_tick(self, state: FlightState, targets: PhaseTargets,
                   throttle_available: bool = True,
                   params: AircraftParams = DEFAULT_PARAMS) -> None:
        self._snapshots.append(state)
        if self.skill.noise_sigma > 0.0:
            # autocorrelated jitter: novices hold a wrong bias for seconds,
            # they do not dither around the right answer
            rho = 0.9
            scale = self.skill.noise_sigma * math.sqrt(1.0 - rho * rho)
            self._noise = (
                rho * self._noise[0] + scale * self.rng.gauss(0.0, 1.0),
                rho * self._noise[1] + scale * self.rng.gauss(0.0, 1.0),
            )
        self._update_throttle(targets, throttle_available, params)

    def _perceived(self, live: FlightState) -> FlightState:
        if self.skill.reaction_delay_s <= 0.0:
            return live
        return self._snapshots[0]

    def _update_throttle(self, targets: PhaseTargets, available: bool,
                         params: AircraftParams) -> None:
        if not available:
            self._throttle = 0.0
            return
        if targets.throttle is not None:
            self._throttle = targets.throttle
            return
        perceived = self._snapshots[-1] if self.skill.reaction_delay_s <= 0 else self._snapshots[0]
        if self._throttle is None:
            # rough power guess for the current speed; the integral corrects it
            v = max(perceived.ias_kt * KT_TO_MS, 1.0)
            drag = params.drag_k0 * v * v + params.drag_k1 / (v * v)
            self._throttle = min(1.0, drag / params.max_thrust_n)
        if targets.ias_kt is not None and not targets.pitch_for_speed:
            err = targets.ias_kt - perceived.ias_kt
            self._throttle = min(1.0, max(0.0, self._throttle + 0.008 * self.skill.gain_error * err))

    def control(self, live: FlightState, targets: PhaseTargets) -> ControlInput:
        p = self._perceived(live)
        gain = self.skill.gain_error

        if targets.bank_deg is not None:
            bank_cmd = targets.bank_deg
        elif targets.heading_deg is not None:
            bank_cmd = max(-30.0, min(30.0, 1.5 * heading_delta(targets.heading_deg, p.heading_deg)))
        else:
            bank_cmd = 0.0
        stick_x = gain * (bank_cmd - p.bank_deg) / 30.0 + self._noise[0]

        if targets.pitch_deg is not None:
            pitch_cmd = targets.pitch_deg
            stick_y = gain * (pitch_cmd - p.pitch_deg) / 8.0
        elif targets.pitch_for_speed and targets.ias_kt is not None:
            # fast -> raise the nose, slow -> lower it
            pitch_cmd = targets.base_pitch_deg + 0.6 * (p.ias_kt - targets.ias_kt)
            pitch_cmd = max(targets.base_pitch_deg - 8.0, min(targets.base_pitch_deg + 8.0, pitch_cmd))
            stick_y = gain * (pitch_cmd - p.pitch_deg) / 8.0
        elif targets.altitude_ft is not None or targets.vs_fpm is not None:
            vs_des = 0.0
            if targets.altitude_ft is not None:
                vs_des += max(-700.0, min(700.0, 5.0 * gain * (targets.altitude_ft - p.altitude_ft)))
            if targets.vs_fpm is not None:
                vs_des += targets.vs_fpm
            stick_y = gain * (vs_des - p.vs_fpm) / 2500.0
        else:
            stick_y = 0.0
        stick_y += self._noise[1]

        return ControlInput(stick_x, stick_y, self._throttle or 0.0)


def trainee_step(
    targets: PhaseTargets,
    state: FlightState,
    skill: TraineeSkill,
    nudge: ControlInput | None = None,
    rng: random.Random | None = None,
) -> ControlInput:
    """One-shot trainee control law (stateless convenience wrapper).

    Nudge blending follows learner-control semantics: the output is the
    trainee's own input plus compliance times the nudge, clamped.
    """
    trainee = SyntheticTrainee(skill, rng or random.Random(0))
    trainee.begin_tick(state, targets)
    own = trainee.control(state, targets)
    if nudge is None:
        return own
    c = skill.compliance
    return ControlInput(
        own.stick_x + c * nudge.stick_x,
        own.stick_y + c * nudge.stick_y,
        own.throttle + c * nudge.throttle,
    )


# --- session-level stepping ----------------------------------------------


class SimSession:
    """Owns one aircraft and advances it one telemetry tick at a time.

    The control source is either the built-in synthetic trainee (batch
    mode) or an external callable returning the latest human ControlInput
    (interactive mode). Nudge windows apply only to the trainee, scaled by
    its compliance.
    """

    def __init__(
        self,
        scenario: Scenario,
        skill: TraineeSkill | None = None,
        params: AircraftParams = DEFAULT_PARAMS,
        seed: int = 0,
        substeps: int = 20,
        control_source: Callable[[], ControlInput] | None = None,
    ):
        self.scenario = scenario
        self.params = params
        self.substeps = substeps
        self.state = scenario.initial
        self.tick_index = 0
        self.touched_down = False
        self.control_source = control_source
        self.trainee = (
            None
            if control_source is not None
            else SyntheticTrainee(skill or PERFECT_SKILL, random.Random(seed))
        )

    def tick(
        self,
        targets: PhaseTargets,
        nudges: Sequence[NudgeWindow] = (),
    ) -> tuple[TelemetryRecord, ControlInput, list[str]]:
        """Advance one second; returns (record, applied control, flags)."""
        self.tick_index += 1
        t0 = float(self.tick_index - 1)
        dt = 1.0 / self.substeps
        flags: list[str] = []
        compliance = self.trainee.skill.compliance if self.trainee else 0.0

        if self.trainee is not None:
            self.trainee.begin_tick(
                self.state, targets, self.scenario.throttle_available, self.params
            )

        applied_first: ControlInput | None = None
        was_airborne = self.state.altitude_ft > self.scenario.ground_elev_ft + 1.0
        for i in range(self.substeps):
            t = t0 + i * dt
            if self.trainee is not None:
                own = self.trainee.control(self.state, targets)
                dx = dy = 0.0
                for w in nudges:
                    wx, wy = w.delta_at(t)
                    dx += wx
                    dy += wy
                inp = ControlInput(
                    own.stick_x + compliance * dx,
                    own.stick_y + compliance * dy,
                    own.throttle,
                )
            else:
                inp = self.control_source()  # type: ignore[misc]
            if not self.scenario.throttle_available:
                inp = replace(inp, throttle=0.0)
            if applied_first is None:
                applied_first = inp
            wind = self.scenario.wind_at(t)
            self.state = step(
                self.state, inp, self.params, wind, dt, self.scenario.ground_elev_ft
            )
            self.state = self.state.with_t(t0 + (i + 1) * dt)

        self.state = self.state.with_t(float(self.tick_index))
        if was_airborne and self.state.altitude_ft <= self.scenario.ground_elev_ft + 0.5:
            self.touched_down = True
            flags.append("touchdown")
        if is_stalled(self.state, self.params):
            flags.append("stall")
        if self.scenario.disturbance_active(float(self.tick_index) - 0.5):
            flags.append("disturbance")
        record = TelemetryRecord(tick=self.tick_index, state=self.state, source="sim")
        return record, applied_first or ControlInput(), flags


@dataclass
class ScenarioTrace:
    records: list[TelemetryRecord] = field(default_factory=list)
    controls: list[ControlInput] = field(default_factory=list)
    flags: list[list[str]] = field(default_factory=list)
    completed_tick: int | None = None
    touched_down: bool = False


AssistSource = Callable[[TelemetryRecord, object, object], Sequence[NudgeWindow]]


def run_scenario(
    scenario: Scenario,
    skill: TraineeSkill | None = None,
    seed: int = 0,
    params: AircraftParams = DEFAULT_PARAMS,
    assist: AssistSource | None = None,
) -> ScenarioTrace:
    """Drive the synthetic trainee through a scenario at 1 Hz.

    ``assist`` is the hook the session engine uses to convert emitted EMS
    commands into nudge windows for the following second; leave it None
    for an unassisted run.
    """
    spec = load_task_spec(scenario.task_id, reference=scenario.reference)
    tracker = PhaseTracker(spec)
    sim = SimSession(scenario, skill=skill, params=params, seed=seed)
    trace = ScenarioTrace()
    nudges: Sequence[NudgeWindow] = ()
    for _ in range(scenario.duration_s):
        record, control, flags = sim.tick(tracker.targets(), nudges)
        report, transition = tracker.observe(record.state)
        trace.records.append(record)
        trace.controls.append(control)
        trace.flags.append(flags)
        if trace.completed_tick is None and tracker.completed:
            trace.completed_tick = record.tick
        nudges = tuple(assist(record, report, transition)) if assist else ()
        if sim.touched_down:
            trace.touched_down = True
            break
    return trace


# --- built-in scenarios ----------------------------------------------------


def builtin_scenario(task_id: str, condition: str = "normal", variant: int = 0) -> Scenario:
    """One of the stock desk-scale scenarios (two variants per condition)."""
    if condition not in ("normal", "abnormal"):
        raise ValueError(f"unknown condition: {condition}")
    if variant not in (0, 1):
        raise ValueError("variant must be 0 or 1")
    builder = _SCENARIO_BUILDERS.get(task_id)
    if builder is None:
        raise ValueError(f"no built-in scenarios for task: {task_id}")
    return builder(condition, variant)


def _straight_level(condition: str, variant: int) -> Scenario:
    ias, alt, hdg = (110.0, 4500.0, 90.0) if variant == 0 else (105.0, 5500.0, 270.0)
    state, _ = trim_level(ias, alt, heading_deg=hdg)
    disturbances: tuple[Disturbance, ...] = ()
    if condition == "abnormal":
        sign = 1.0 if variant == 0 else -1.0
        disturbances = (
            Disturbance("lateral_gust", 20.0, 4.0, 6.0 * sign),
            Disturbance("updraft", 50.0, 8.0, 2.5 * sign),
        )
    return Scenario(
        task_id="straight_level",
        condition=condition,
        initial=state,
        duration_s=90,
        reference=TaskReference(altitude_ft=alt, heading_deg=hdg, ias_kt=ias),
        disturbances=disturbances,
        name=f"straight_level/{condition}/{variant}",
    )


def _takeoff_climb(condition: str, variant: int) -> Scenario:
    hdg = 90.0 if variant == 0 else 180.0
    state = FlightState(
        t=0.0, altitude_ft=0.0, pitch_deg=0.0, bank_deg=0.0, heading_deg=hdg,
        ias_kt=0.0, gs_kt=0.0, vs_fpm=0.0,
        accel_lon_g=0.0, accel_lat_g=0.0, accel_vert_g=1.0,
    )
    disturbances: tuple[Disturbance, ...] = ()
    if condition == "abnormal":
        disturbances = (
            Disturbance("throttle_decay", 35.0, 15.0, 0.75),
            Disturbance("lateral_gust", 28.0, 3.0, 5.0 if variant == 0 else -5.0),
        )
    return Scenario(
        task_id="takeoff_climb",
        condition=condition,
        initial=state,
        duration_s=120,
        reference=TaskReference(altitude_ft=500.0, heading_deg=hdg, ias_kt=75.0),
        disturbances=disturbances,
        name=f"takeoff_climb/{condition}/{variant}",
    )


def _steep_turn(condition: str, variant: int) -> Scenario:
    direction = "left" if variant == 0 else "right"
    hdg = 90.0 if variant == 0 else 360.0
    state, _ = trim_level(105.0, 4500.0, heading_deg=hdg)
    disturbances: tuple[Disturbance, ...] = ()
    if condition == "abnormal":
        disturbances = (
            Disturbance("updraft", 12.0, 6.0, 3.0),
            Disturbance("lateral_gust", 22.0, 4.0, -5.0 if variant == 0 else 5.0),
        )
    return Scenario(
        task_id="steep_turn",
        condition=condition,
        initial=state,
        duration_s=90,
        reference=TaskReference(
            altitude_ft=4500.0, heading_deg=hdg, ias_kt=105.0, turn_direction=direction
        ),
        disturbances=disturbances,
        name=f"steep_turn/{condition}/{variant}",
    )


def _deadstick_landing(condition: str, variant: int) -> Scenario:
    hdg = 90.0 if variant == 0 else 270.0
    state, _ = trim_level(100.0, 1200.0, heading_deg=hdg)
    disturbances: tuple[Disturbance, ...] = ()
    if condition == "abnormal":
        disturbances = (
            Disturbance("lateral_gust", 15.0, 4.0, 5.0 if variant == 0 else -5.0),
            Disturbance("updraft", 40.0, 10.0, -2.0),
        )
    return Scenario(
        task_id="deadstick_landing",
        condition=condition,
        initial=state,
        duration_s=150,
        reference=TaskReference(altitude_ft=1200.0, heading_deg=hdg, ias_kt=78.0),
        disturbances=disturbances,
        ground_elev_ft=0.0,
        throttle_available=False,
        name=f"deadstick_landing/{condition}/{variant}",
    )


_SCENARIO_BUILDERS = {
    "straight_level": _straight_level,
    "takeoff_climb": _takeoff_climb,
    "steep_turn": _steep_turn,
    "deadstick_landing": _deadstick_landing,
}
