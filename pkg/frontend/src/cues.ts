// EMS cue model: which forearm channel is active and how strong, driven by
// the command's own envelope samples. The visualization lifetime equals the
// command's duration_ms; amplitude at any instant comes straight from the
// payload's envelope, never recomputed.

import { CommandView } from "./types.js";

export interface ActiveCue {
  channel: CommandView["channel"];
  mode: number;
  purpose: CommandView["purpose"];
  startedAtMs: number;
  durationMs: number;
  envelope: number[];
  sampleRateHz: number;
}

export function envelopeValueAt(cue: ActiveCue, nowMs: number): number {
  const relMs = nowMs - cue.startedAtMs;
  if (relMs < 0 || relMs > cue.durationMs) return 0;
  const idx = Math.min(
    Math.round((relMs / 1000) * cue.sampleRateHz),
    cue.envelope.length - 1,
  );
  return cue.envelope[idx] ?? 0;
}

export class CueModel {
  active: ActiveCue[] = [];
  total = 0;
  totalByMode = new Map<number, number>();

  start(command: CommandView, nowMs: number): ActiveCue {
    const cue: ActiveCue = {
      channel: command.channel,
      mode: command.mode,
      purpose: command.purpose,
      startedAtMs: nowMs,
      durationMs: command.duration_ms,
      envelope: command.envelope,
      sampleRateHz: command.sample_rate_hz,
    };
    this.active.push(cue);
    this.total += 1;
    this.totalByMode.set(command.mode, (this.totalByMode.get(command.mode) ?? 0) + 1);
    return cue;
  }

  /** Drop cues whose duration elapsed; returns the still-active set. */
  prune(nowMs: number): ActiveCue[] {
    this.active = this.active.filter((c) => nowMs - c.startedAtMs <= c.durationMs);
    return this.active;
  }

  /** Per-channel intensity in [0,1] for the arm diagram. */
  channelLevels(nowMs: number): Record<string, number> {
    const levels: Record<string, number> = { fwd: 0, back: 0, left: 0, right: 0 };
    for (const cue of this.active) {
      levels[cue.channel] = Math.max(levels[cue.channel], envelopeValueAt(cue, nowMs));
    }
    return levels;
  }
}
