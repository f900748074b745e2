import { describe, expect, it } from "vitest";

import { CueModel, envelopeValueAt } from "../src/cues.js";
import { CommandView } from "../src/types.js";

function rising(durationMs = 400): CommandView {
  const n = Math.round((durationMs / 1000) * 100);
  const envelope = Array.from({ length: n + 1 }, (_, i) => 0.4 + 0.6 * (i / n));
  return {
    channel: "right", mode: 2, peak_fraction: 1, duration_ms: durationMs,
    purpose: "correction", sample_rate_hz: 100, envelope,
  };
}

describe("cue model", () => {
  it("animates the command's own envelope samples", () => {
    const cues = new CueModel();
    const cue = cues.start(rising(400), 1000);
    expect(envelopeValueAt(cue, 1000)).toBeCloseTo(0.4);
    expect(envelopeValueAt(cue, 1200)).toBeCloseTo(0.7, 2);
    expect(envelopeValueAt(cue, 1400)).toBeCloseTo(1.0);
    expect(envelopeValueAt(cue, 1401)).toBe(0); // past the duration: dark
    expect(envelopeValueAt(cue, 999)).toBe(0);
  });

  it("cue lifetime equals duration_ms within one animation frame", () => {
    const frameMs = 17;
    const cues = new CueModel();
    cues.start(rising(400), 0);
    expect(cues.prune(400 - frameMs)).toHaveLength(1);
    expect(cues.prune(400 + frameMs)).toHaveLength(0);
  });

  it("channel levels take the max across overlapping cues", () => {
    const cues = new CueModel();
    cues.start(rising(400), 0);
    cues.start({ ...rising(400), channel: "back" }, 100);
    const levels = cues.channelLevels(200);
    expect(levels.right).toBeCloseTo(0.7, 2);
    expect(levels.back).toBeCloseTo(0.55, 2);
    expect(levels.left).toBe(0);
  });

  it("counts cues per mode for the session report", () => {
    const cues = new CueModel();
    cues.start(rising(), 0);
    cues.start(rising(), 1000);
    cues.start({ ...rising(), mode: 3, purpose: "pre_start" }, 2000);
    expect(cues.total).toBe(3);
    expect(cues.totalByMode.get(2)).toBe(2);
    expect(cues.totalByMode.get(3)).toBe(1);
  });
});
