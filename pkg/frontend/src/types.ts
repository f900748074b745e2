// Mirror of the gateway per-tick payload. Guards accept schema-valid
// payloads, ignore unknown fields, and reject anything else: the UI never
// fabricates data from a malformed message.

export interface FlightStateView {
  t: number;
  altitude_ft: number;
  pitch_deg: number;
  bank_deg: number;
  heading_deg: number;
  ias_kt: number;
  gs_kt: number;
  vs_fpm: number;
  accel_lon_g: number;
  accel_lat_g: number;
  accel_vert_g: number;
}

export interface DeviationView {
  metric: string;
  value: number;
  target: number;
  tolerance: number;
  deviation: number;
  in_band: boolean;
}

export interface CommandView {
  channel: "fwd" | "back" | "left" | "right";
  mode: number;
  peak_fraction: number;
  duration_ms: number;
  purpose: "pre_start" | "correction";
  sample_rate_hz: number;
  envelope: number[];
}

export interface VoiceView {
  tick: number;
  instrument: string;
  template_id: string;
}

export interface ControlsView {
  stick_x: number;
  stick_y: number;
  throttle: number;
}

export interface TickPayloadView {
  type: "tick";
  tick: number;
  state: FlightStateView;
  phase: string;
  phase_transition: boolean;
  deviations: DeviationView[];
  worst: string | null;
  all_in_band: boolean;
  guidance: string | null;
  commands: CommandView[];
  voice: VoiceView[];
  controls: ControlsView | null;
  verdict: { c1: boolean; c2: boolean; c3: boolean; overall: boolean };
  flags: string[];
}

export interface EndPayloadView {
  type: "end";
  ticks: number;
  log_path: string;
  metrics: Record<string, number | null>;
}

export type StreamPayload =
  | TickPayloadView
  | EndPayloadView
  | { type: "hello"; [k: string]: unknown }
  | { type: "error"; detail: string };

const STATE_KEYS: (keyof FlightStateView)[] = [
  "t", "altitude_ft", "pitch_deg", "bank_deg", "heading_deg",
  "ias_kt", "gs_kt", "vs_fpm", "accel_lon_g", "accel_lat_g", "accel_vert_g",
];

function isNum(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isObj(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

export function parseState(x: unknown): FlightStateView | null {
  if (!isObj(x)) return null;
  for (const key of STATE_KEYS) {
    if (!isNum(x[key])) return null;
  }
  const out = {} as FlightStateView;
  for (const key of STATE_KEYS) out[key] = x[key] as number;
  return out;
}

function parseDeviation(x: unknown): DeviationView | null {
  if (!isObj(x)) return null;
  if (typeof x.metric !== "string" || typeof x.in_band !== "boolean") return null;
  if (![x.value, x.target, x.tolerance, x.deviation].every(isNum)) return null;
  return {
    metric: x.metric,
    value: x.value as number,
    target: x.target as number,
    tolerance: x.tolerance as number,
    deviation: x.deviation as number,
    in_band: x.in_band,
  };
}

function parseCommand(x: unknown): CommandView | null {
  if (!isObj(x)) return null;
  const channelOk = ["fwd", "back", "left", "right"].includes(x.channel as string);
  const purposeOk = ["pre_start", "correction"].includes(x.purpose as string);
  if (!channelOk || !purposeOk) return null;
  if (![x.mode, x.peak_fraction, x.duration_ms, x.sample_rate_hz].every(isNum)) return null;
  if (!Array.isArray(x.envelope) || !x.envelope.every(isNum)) return null;
  return {
    channel: x.channel as CommandView["channel"],
    mode: x.mode as number,
    peak_fraction: x.peak_fraction as number,
    duration_ms: x.duration_ms as number,
    purpose: x.purpose as CommandView["purpose"],
    sample_rate_hz: x.sample_rate_hz as number,
    envelope: (x.envelope as number[]).slice(),
  };
}

export function parseTick(x: unknown): TickPayloadView | null {
  if (!isObj(x) || x.type !== "tick" || !isNum(x.tick)) return null;
  const state = parseState(x.state);
  if (!state) return null;
  if (!Array.isArray(x.deviations) || !Array.isArray(x.commands)) return null;
  const deviations: DeviationView[] = [];
  for (const d of x.deviations) {
    const parsed = parseDeviation(d);
    if (!parsed) return null;
    deviations.push(parsed);
  }
  const commands: CommandView[] = [];
  for (const c of x.commands) {
    const parsed = parseCommand(c);
    if (!parsed) return null;
    commands.push(parsed);
  }
  const voice: VoiceView[] = [];
  if (Array.isArray(x.voice)) {
    for (const v of x.voice) {
      if (isObj(v) && typeof v.instrument === "string" && isNum(v.tick)) {
        voice.push({
          tick: v.tick as number,
          instrument: v.instrument,
          template_id: typeof v.template_id === "string" ? v.template_id : "",
        });
      }
    }
  }
  const verdict = isObj(x.verdict)
    ? {
        c1: x.verdict.c1 === true,
        c2: x.verdict.c2 === true,
        c3: x.verdict.c3 === true,
        overall: x.verdict.overall === true,
      }
    : { c1: false, c2: false, c3: false, overall: false };
  let controls: ControlsView | null = null;
  if (isObj(x.controls) && [x.controls.stick_x, x.controls.stick_y, x.controls.throttle].every(isNum)) {
    controls = {
      stick_x: x.controls.stick_x as number,
      stick_y: x.controls.stick_y as number,
      throttle: x.controls.throttle as number,
    };
  }
  return {
    type: "tick",
    tick: x.tick as number,
    state,
    phase: typeof x.phase === "string" ? x.phase : "",
    phase_transition: x.phase_transition === true,
    deviations,
    worst: typeof x.worst === "string" ? x.worst : null,
    all_in_band: x.all_in_band === true,
    guidance: typeof x.guidance === "string" ? x.guidance : null,
    commands,
    voice,
    controls,
    verdict,
    flags: Array.isArray(x.flags) ? x.flags.filter((f) => typeof f === "string") : [],
  };
}

export function parsePayload(raw: string): StreamPayload | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!isObj(obj) || typeof obj.type !== "string") return null;
  if (obj.type === "tick") return parseTick(obj);
  if (obj.type === "end") {
    if (!isNum(obj.ticks) || !isObj(obj.metrics)) return null;
    return {
      type: "end",
      ticks: obj.ticks as number,
      log_path: typeof obj.log_path === "string" ? obj.log_path : "",
      metrics: obj.metrics as Record<string, number | null>,
    };
  }
  if (obj.type === "hello") return obj as { type: "hello" };
  if (obj.type === "error" && typeof obj.detail === "string") {
    return { type: "error", detail: obj.detail };
  }
  return null;
}
