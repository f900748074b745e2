"""Canonical flight-state snapshot and telemetry normalization.

One snapshot covers the four instrument groups the assistant reasons
about: position (altitude), attitude (pitch, bank, heading), speed
(indicated airspeed, ground speed, vertical speed) and body-axis
accelerations. Units follow aviation convention: feet, knots,
feet/minute, degrees, g.

The telemetry line format (one JSON object per line, keys ``tick`` plus
the ten metric keys) is the wire contract an external simulator bridge
must emit; :func:`parse_telemetry_line` and :func:`format_telemetry_line`
are the two sides of it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Mapping


class TelemetryError(Exception):
    """Base class for telemetry normalization/parsing failures."""


class MissingMetric(TelemetryError):
    def __init__(self, name: str):
        super().__init__(f"missing metric: {name}")
        self.name = name


class NonFiniteValue(TelemetryError):
    def __init__(self, name: str):
        super().__init__(f"non-finite value for metric: {name}")
        self.name = name


class MalformedLine(TelemetryError):
    pass


class TickRegression(TelemetryError):
    def __init__(self, tick: int, prev_tick: int):
        super().__init__(f"tick {tick} does not advance past previous tick {prev_tick}")
        self.tick = tick
        self.prev_tick = prev_tick


# The ten metric keys, in wire order. FlightState.t is session time and is
# not part of the wire format (the integer tick is).
METRIC_KEYS = (
    "altitude_ft",
    "pitch_deg",
    "bank_deg",
    "heading_deg",
    "ias_kt",
    "gs_kt",
    "vs_fpm",
    "accel_lon_g",
    "accel_lat_g",
    "accel_vert_g",
)

LINE_KEYS = ("tick",) + METRIC_KEYS


def wrap_heading(deg: float) -> float:
    """Wrap an angle into [0, 360). Exact identity on canonical input."""
    if 0.0 <= deg < 360.0:
        return deg
    r = deg % 360.0
    return r if r < 360.0 else 0.0  # float % can round up to the modulus


def wrap_signed(deg: float) -> float:
    """Wrap an angle into [-180, 180). Exact identity on canonical input."""
    if -180.0 <= deg < 180.0:
        return deg
    r = (deg + 180.0) % 360.0 - 180.0
    return r if r < 180.0 else -180.0


def heading_delta(a: float, b: float) -> float:
    """Shortest signed arc from ``b`` to ``a``, in (-180, 180]."""
    d = (a - b) % 360.0
    if d > 180.0:
        d -= 360.0
    return d


@dataclass(frozen=True, slots=True)
class FlightState:
    """One snapshot of the aircraft, normalized to canonical ranges."""

    t: float  # seconds since session start; integer at tick boundaries
    altitude_ft: float
    pitch_deg: float
    bank_deg: float  # positive = right wing down
    heading_deg: float
    ias_kt: float
    gs_kt: float
    vs_fpm: float
    accel_lon_g: float
    accel_lat_g: float
    accel_vert_g: float

    def as_metrics(self) -> dict[str, float]:
        """The ten wire metrics as a plain dict (t excluded)."""
        return {k: getattr(self, k) for k in METRIC_KEYS}

    def metric(self, name: str) -> float:
        if name not in METRIC_KEYS:
            raise KeyError(name)
        return getattr(self, name)

    def with_t(self, t: float) -> "FlightState":
        return replace(self, t=t)


@dataclass(frozen=True, slots=True)
class ControlInput:
    """Stick and throttle command. All fields are clamped on construction."""

    stick_x: float = 0.0  # positive = right roll command
    stick_y: float = 0.0  # positive = pull / pitch up
    throttle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stick_x", _clamp(self.stick_x, -1.0, 1.0))
        object.__setattr__(self, "stick_y", _clamp(self.stick_y, -1.0, 1.0))
        object.__setattr__(self, "throttle", _clamp(self.throttle, 0.0, 1.0))


@dataclass(frozen=True, slots=True)
class TelemetryRecord:
    tick: int
    state: FlightState
    source: str = "sim"  # "sim" | "external"


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def normalize_state(raw: Mapping[str, float], t: float = 0.0) -> FlightState:
    """Normalize a raw metric map into a valid FlightState.

    Angles are wrapped into canonical ranges (heading to [0, 360), pitch
    and bank to [-180, 180)); speeds are floored at zero. Idempotent.

    Raises MissingMetric or NonFiniteValue per offending key.
    """
    values: dict[str, float] = {}
    for key in METRIC_KEYS:
        if key not in raw:
            raise MissingMetric(key)
        try:
            v = float(raw[key])
        except (TypeError, ValueError):
            raise NonFiniteValue(key) from None
        if not math.isfinite(v):
            raise NonFiniteValue(key)
        values[key] = v
    if not math.isfinite(t):
        raise NonFiniteValue("t")
    values["heading_deg"] = wrap_heading(values["heading_deg"])
    values["pitch_deg"] = wrap_signed(values["pitch_deg"])
    values["bank_deg"] = wrap_signed(values["bank_deg"])
    values["ias_kt"] = max(0.0, values["ias_kt"])
    values["gs_kt"] = max(0.0, values["gs_kt"])
    return FlightState(t=t, **values)


def parse_telemetry_line(text: str, prev_tick: int | None = None) -> TelemetryRecord:
    """Parse one JSON telemetry line into a normalized TelemetryRecord.

    ``prev_tick`` enables the strictly-increasing tick check; pass the
    previous record's tick (or None at stream start).
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedLine("telemetry line is not a JSON object")
    unknown = set(obj) - set(LINE_KEYS)
    if unknown:
        raise MalformedLine(f"unexpected keys: {sorted(unknown)}")
    if "tick" not in obj:
        raise MalformedLine("missing tick")
    tick = obj["tick"]
    if not isinstance(tick, int) or isinstance(tick, bool):
        raise MalformedLine(f"tick must be an integer, got {tick!r}")
    if prev_tick is not None and tick <= prev_tick:
        raise TickRegression(tick, prev_tick)
    state = normalize_state(obj, t=float(tick))
    return TelemetryRecord(tick=tick, state=state, source="external")


def format_telemetry_line(record: TelemetryRecord) -> str:
    """Serialize a TelemetryRecord to one LF-terminated telemetry line."""
    obj: dict[str, float | int] = {"tick": record.tick}
    obj.update(record.state.as_metrics())
    return json.dumps(obj, separators=(",", ":")) + "\n"


class TelemetryReader:
    """Stateful line reader enforcing strictly increasing ticks."""

    def __init__(self):
        self._prev: int | None = None

    def feed(self, text: str) -> TelemetryRecord:
        record = parse_telemetry_line(text, prev_tick=self._prev)
        self._prev = record.tick
        return record
