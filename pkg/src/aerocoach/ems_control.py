"""EMS output stage: calibration, waveform synthesis, safety, wire frames.

Stimulation amplitude is expressed as a drive fraction in [0, 1] anchored
between a channel's motion threshold and its comfort ceiling, so the same
command is safe across differently calibrated users. Four envelope modes
are provided; the pipeline only ever emits mode 3 for pre-start cues and
mode 2 for corrections.

The device frame is 8 bytes:
  [0] sync 0xA5, [1] channel (0=fwd 1=back 2=left 3=right), [2] mode 1-4,
  [3] peak amplitude 0-255 device units, [4..5] duration_ms u16 BE,
  [6] flags (bit0 = pre-start), [7] CRC-8 poly 0x07 init 0x00 over 0..6.
Carrier frequency and pulse width are device-level constants, not
per-command data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .flight_state import ControlInput


class EmsError(Exception):
    pass


class InvalidDuration(EmsError):
    pass


class UncalibratedChannel(EmsError):
    pass


class InvalidProfile(EmsError):
    pass


class FrameError(EmsError):
    pass


class BadChecksum(FrameError):
    pass


class BadSync(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


CHANNELS = ("fwd", "back", "left", "right")
CHANNEL_CODES = {name: i for i, name in enumerate(CHANNELS)}

MODES = (1, 2, 3, 4)
MODE_BASE = 0.4  # floor of the shaped envelopes (modes 2-4)
MODE_CONSTANT_LEVEL = 0.8

DURATION_MIN_MS = 200
DURATION_MAX_MS = 3000

MAGNITUDE_SCALE = {"light": 0.7, "firm": 1.0}

FRAME_LEN = 8
FRAME_SYNC = 0xA5
ACK_SYNC = 0x5A

# maximum stick authority of a nudge; always below the trainee's full 1.0
NUDGE_FULL_SCALE = 0.35


def select_mode(trigger: str) -> int:
    """Pre-start cues use mode 3, corrections mode 2."""
    if trigger == "pre_start":
        return 3
    if trigger == "correction":
        return 2
    raise ValueError(f"unknown trigger: {trigger}")


@dataclass(frozen=True)
class ChannelCalibration:
    perception_ma: float  # first sensation
    motion_ma: float  # visible contraction
    max_comfort_ma: float

    def __post_init__(self):
        if not 0 < self.perception_ma < self.motion_ma <= self.max_comfort_ma:
            raise InvalidProfile(
                "calibration must satisfy 0 < perception < motion <= max_comfort"
            )


@dataclass(frozen=True)
class CalibrationProfile:
    subject_id: str
    channels: Mapping[str, ChannelCalibration]
    ceiling_ma: float = 20.0

    def __post_init__(self):
        for name, cal in self.channels.items():
            if name not in CHANNELS:
                raise InvalidProfile(f"unknown channel: {name}")
            if cal.max_comfort_ma > self.ceiling_ma:
                raise InvalidProfile(
                    f"channel {name}: max_comfort {cal.max_comfort_ma} exceeds ceiling"
                )

    def channel(self, name: str) -> ChannelCalibration:
        try:
            return self.channels[name]
        except KeyError:
            raise UncalibratedChannel(name) from None

    def drive_ma(self, channel: str, fraction: float) -> float:
        """Map a drive fraction onto the channel's motion..comfort range."""
        cal = self.channel(channel)
        return cal.motion_ma + fraction * (cal.max_comfort_ma - cal.motion_ma)

    def to_json(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "ceiling_ma": self.ceiling_ma,
            "channels": {
                name: {
                    "perception_ma": c.perception_ma,
                    "motion_ma": c.motion_ma,
                    "max_comfort_ma": c.max_comfort_ma,
                }
                for name, c in self.channels.items()
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationProfile":
        try:
            return cls(
                subject_id=obj["subject_id"],
                ceiling_ma=obj.get("ceiling_ma", 20.0),
                channels={
                    name: ChannelCalibration(**c) for name, c in obj["channels"].items()
                },
            )
        except (KeyError, TypeError) as exc:
            raise InvalidProfile(f"bad profile: {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationProfile":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def default_profile(subject_id: str = "default") -> CalibrationProfile:
    cal = ChannelCalibration(perception_ma=2.0, motion_ma=4.0, max_comfort_ma=8.0)
    return CalibrationProfile(subject_id=subject_id, channels={c: cal for c in CHANNELS})


@dataclass(frozen=True)
class WaveformEnvelope:
    """Sampled modulation envelope; samples are drive fractions in [0, 1]."""

    mode: int
    duration_ms: int
    sample_rate_hz: int
    samples: tuple[float, ...]

    @property
    def peak(self) -> float:
        return max(self.samples)

    def value_at(self, t_s: float) -> float:
        """Envelope value at t seconds from onset (0 outside the window)."""
        if t_s < 0.0 or t_s * 1000.0 > self.duration_ms:
            return 0.0
        i = min(int(round(t_s * self.sample_rate_hz)), len(self.samples) - 1)
        return self.samples[i]

    def scaled_to_peak(self, new_peak: float) -> "WaveformEnvelope":
        if self.peak <= 0.0:
            return self
        f = new_peak / self.peak
        return replace(self, samples=tuple(s * f for s in self.samples))


def synthesize(
    mode: int,
    magnitude_class: str,
    duration_ms: int,
    profile: CalibrationProfile,
    channel: str,
    sample_rate_hz: int = 100,
) -> WaveformEnvelope:
    """Build one mode's envelope, scaled by the magnitude class.

    Mode shapes: 1 constant; 2 rising (weak to strong); 3 unimodal
    (weak-strong-weak); 4 falling (strong to weak).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode}")
    if not DURATION_MIN_MS <= duration_ms <= DURATION_MAX_MS:
        raise InvalidDuration(f"duration {duration_ms} ms outside [{DURATION_MIN_MS}, {DURATION_MAX_MS}]")
    profile.channel(channel)  # raises UncalibratedChannel
    try:
        scale = MAGNITUDE_SCALE[magnitude_class]
    except KeyError:
        raise ValueError(f"unknown magnitude class: {magnitude_class}") from None

    n = max(2, round(duration_ms * sample_rate_hz / 1000.0))
    samples = []
    for i in range(n + 1):
        u = i / n
        if mode == 1:
            a = MODE_CONSTANT_LEVEL
        elif mode == 2:
            a = MODE_BASE + 0.6 * u
        elif mode == 3:
            a = MODE_BASE + 0.6 * math.sin(math.pi * u)
        else:
            a = 1.0 - 0.6 * u
        samples.append(a * scale)
    return WaveformEnvelope(
        mode=mode,
        duration_ms=duration_ms,
        sample_rate_hz=sample_rate_hz,
        samples=tuple(samples),
    )


@dataclass(frozen=True)
class EmsCommand:
    channel: str
    envelope: WaveformEnvelope
    start_tick: int
    purpose: str  # "pre_start" | "correction"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel: {self.channel}")
        if self.purpose not in ("pre_start", "correction"):
            raise ValueError(f"unknown purpose: {self.purpose}")
        if self.envelope.mode != select_mode(self.purpose):
            raise ValueError(
                f"purpose {self.purpose} requires mode {select_mode(self.purpose)}, "
                f"got {self.envelope.mode}"
            )

    @property
    def peak_fraction(self) -> float:
        return self.envelope.peak


def map_direction(stick_op) -> str:
    """Stick operation to forearm channel: {x,+}=right {x,-}=left {y,+}=back {y,-}=fwd."""
    key = (stick_op.axis, stick_op.direction)
    table = {("x", "+"): "right", ("x", "-"): "left", ("y", "+"): "back", ("y", "-"): "fwd"}
    try:
        return table[key]
    except KeyError:
        raise ValueError(f"unmappable stick operation: {key}") from None


def nudge_of(command: EmsCommand) -> ControlInput:
    """Peak stick delta a command suggests to the synthetic trainee.

    Bounded well below full stick authority so the learner can always
    overpower it; the in-flight delta is this peak scaled by the envelope.
    """
    mag = NUDGE_FULL_SCALE * command.peak_fraction
    dx, dy = {
        "right": (mag, 0.0),
        "left": (-mag, 0.0),
        "back": (0.0, mag),
        "fwd": (0.0, -mag),
    }[command.channel]
    return ControlInput(dx, dy, 0.0)


# --- safety gate ------------------------------------------------------------


@dataclass(frozen=True)
class GateDecision:
    outcome: str  # "pass" | "clamped" | "rejected"
    command: EmsCommand | None  # possibly clamped; None when rejected
    reason: str = ""
    peak_ma: float = 0.0


class SafetyGate:
    """Stateful admission control for stimulation commands.

    Enforced limits: per-channel peak at or below max_comfort (clamped),
    absolute ceiling never exceeded (rejected outright), inter-command gap
    per channel of at least 250 ms, and per-channel duty cycle of at most
    50% over any rolling 10 s window.
    """

    MIN_GAP_S = 0.25
    DUTY_WINDOW_S = 10.0
    DUTY_MAX = 0.5

    def __init__(self, profile: CalibrationProfile):
        self.profile = profile
        self._history: dict[str, list[tuple[float, float]]] = {c: [] for c in CHANNELS}

    def check(self, command: EmsCommand, start_s: float) -> GateDecision:
        """Admit, clamp, or reject a command starting at start_s seconds."""
        cal = self.profile.channel(command.channel)
        peak_ma = self.profile.drive_ma(command.channel, command.peak_fraction)

        if peak_ma > self.profile.ceiling_ma:
            return GateDecision("rejected", None, "ceiling", peak_ma)

        outcome = "pass"
        cmd = command
        if peak_ma > cal.max_comfort_ma:
            cmd = replace(command, envelope=command.envelope.scaled_to_peak(1.0))
            peak_ma = cal.max_comfort_ma
            outcome = "clamped"

        history = self._history[cmd.channel]
        end_s = start_s + cmd.envelope.duration_ms / 1000.0
        if history:
            last_end = history[-1][1]
            if start_s - last_end < self.MIN_GAP_S:
                return GateDecision("rejected", None, "min_gap", peak_ma)

        # on-time over the rolling window ending at this command's end;
        # per-channel intervals are disjoint, so this is the binding window
        window_start = end_s - self.DUTY_WINDOW_S
        on_time = end_s - max(start_s, window_start)
        for s, e in history:
            on_time += max(0.0, min(e, end_s) - max(s, window_start))
        if on_time > self.DUTY_MAX * self.DUTY_WINDOW_S:
            return GateDecision("rejected", None, "duty_cycle", peak_ma)

        history.append((start_s, end_s))
        if len(history) > 64:
            del history[: len(history) - 64]
        return GateDecision(outcome, cmd, "", peak_ma)


# --- frame codec ------------------------------------------------------------


def crc8(data: bytes, poly: int = 0x07, init: int = 0x00) -> int:
    crc = init
    for b in data:
        crc ^= b
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


@dataclass(frozen=True)
class FrameSummary:
    channel: str
    mode: int
    peak_byte: int
    duration_ms: int
    pre_start: bool

    @property
    def peak_fraction(self) -> float:
        return self.peak_byte / 255.0


def encode_frame(command: EmsCommand, profile: CalibrationProfile) -> bytes:
    """Encode a gated command as one 8-byte device frame."""
    profile.channel(command.channel)
    peak_byte = round(255 * min(1.0, max(0.0, command.peak_fraction)))
    duration = int(command.envelope.duration_ms)
    body = bytes(
        [
            FRAME_SYNC,
            CHANNEL_CODES[command.channel],
            command.envelope.mode,
            peak_byte,
            (duration >> 8) & 0xFF,
            duration & 0xFF,
            0x01 if command.purpose == "pre_start" else 0x00,
        ]
    )
    return body + bytes([crc8(body)])


def decode_frame(frame: bytes) -> FrameSummary:
    """Decode one frame; never reads past FRAME_LEN bytes."""
    if len(frame) < FRAME_LEN:
        raise TruncatedFrame(f"need {FRAME_LEN} bytes, got {len(frame)}")
    frame = frame[:FRAME_LEN]
    if frame[0] != FRAME_SYNC:
        raise BadSync(f"sync byte {frame[0]:#04x}")
    if crc8(frame[:7]) != frame[7]:
        raise BadChecksum("frame checksum mismatch")
    channel_code = frame[1]
    if channel_code >= len(CHANNELS):
        raise FrameError(f"unknown channel code {channel_code}")
    mode = frame[2]
    if mode not in MODES:
        raise FrameError(f"unknown mode {mode}")
    return FrameSummary(
        channel=CHANNELS[channel_code],
        mode=mode,
        peak_byte=frame[3],
        duration_ms=(frame[4] << 8) | frame[5],
        pre_start=bool(frame[6] & 0x01),
    )


def ack_for(frame: bytes) -> bytes:
    """The 2-byte acknowledgement a device returns for a received frame."""
    return bytes([ACK_SYNC, crc8(frame)])
