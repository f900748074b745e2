import { describe, expect, it } from "vitest";

import { parsePayload, parseTick } from "../src/types.js";

const state = {
  t: 5, altitude_ft: 4500, pitch_deg: 2.5, bank_deg: -45, heading_deg: 90,
  ias_kt: 105, gs_kt: 105, vs_fpm: 0, accel_lon_g: 0, accel_lat_g: 0, accel_vert_g: 1.41,
};

const tick = {
  type: "tick",
  tick: 5,
  state,
  phase: "hold_45",
  phase_transition: false,
  deviations: [
    { metric: "bank_deg", value: -52, target: -45, tolerance: 5, deviation: -7, in_band: false },
  ],
  worst: "bank_deg",
  all_in_band: false,
  guidance: "bank angle is low: stick right",
  commands: [
    { channel: "right", mode: 2, peak_fraction: 1, duration_ms: 400, purpose: "correction",
      sample_rate_hz: 100, envelope: [0.4, 0.7, 1.0] },
  ],
  voice: [{ tick: 5, instrument: "attitude indicator", template_id: "check_instrument.v1" }],
  controls: { stick_x: 0.1, stick_y: 0, throttle: 0.4 },
  verdict: { c1: true, c2: true, c3: true, overall: true },
  flags: [],
};

describe("tick payload guard", () => {
  it("accepts a schema-valid payload", () => {
    const parsed = parseTick(tick);
    expect(parsed).not.toBeNull();
    expect(parsed!.commands[0].channel).toBe("right");
    expect(parsed!.deviations[0].in_band).toBe(false);
    expect(parsed!.controls!.stick_x).toBeCloseTo(0.1);
  });

  it("ignores unknown fields", () => {
    const withExtra = { ...tick, shiny_new_field: { nested: true }, another: 7 };
    const parsed = parseTick(withExtra);
    expect(parsed).not.toBeNull();
    expect((parsed as unknown as Record<string, unknown>).shiny_new_field).toBeUndefined();
  });

  it("rejects missing state metrics", () => {
    const broken = { ...tick, state: { ...state } as Record<string, unknown> };
    delete broken.state.ias_kt;
    expect(parseTick(broken)).toBeNull();
  });

  it("rejects malformed commands and deviations", () => {
    expect(parseTick({ ...tick, commands: [{ channel: "elbow" }] })).toBeNull();
    expect(parseTick({ ...tick, deviations: [{ metric: 5 }] })).toBeNull();
    expect(parseTick({ ...tick, tick: "five" })).toBeNull();
  });
});

describe("stream payload dispatch", () => {
  it("parses tick, end, hello and error frames", () => {
    expect(parsePayload(JSON.stringify(tick))!.type).toBe("tick");
    const end = parsePayload(JSON.stringify({
      type: "end", ticks: 90, log_path: "x.jsonl",
      metrics: { bank_in_band_proportion: 0.4 },
    }));
    expect(end).toMatchObject({ type: "end", ticks: 90 });
    expect(parsePayload(JSON.stringify({ type: "hello", running: false }))!.type).toBe("hello");
    expect(parsePayload(JSON.stringify({ type: "error", detail: "boom" }))).toMatchObject({
      type: "error", detail: "boom",
    });
  });

  it("drops garbage instead of fabricating data", () => {
    expect(parsePayload("{{{")).toBeNull();
    expect(parsePayload(JSON.stringify({ type: "mystery" }))).toBeNull();
    expect(parsePayload(JSON.stringify({ type: "tick", tick: 1 }))).toBeNull();
  });
});
