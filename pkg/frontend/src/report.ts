// Session report accumulation and rendering models. Every number shown is
// aggregated from gateway payloads (or a loaded file); deviations are never
// recomputed client-side.

import { TickPayloadView } from "./types.js";

export interface TimelineEntry {
  tick: number;
  kind: "pre_start" | "correction" | "phase";
  label: string;
}

export interface DeviationPoint {
  tick: number;
  metric: string;
  deviation: number;
  tolerance: number;
  in_band: boolean;
}

export class ReportModel {
  private counts = new Map<string, { in: number; n: number }>();
  timeline: TimelineEntry[] = [];
  deviationSeries: DeviationPoint[] = [];
  ticks = 0;

  observe(payload: TickPayloadView): void {
    this.ticks += 1;
    for (const d of payload.deviations) {
      const c = this.counts.get(d.metric) ?? { in: 0, n: 0 };
      c.n += 1;
      if (d.in_band) c.in += 1;
      this.counts.set(d.metric, c);
      this.deviationSeries.push({
        tick: payload.tick,
        metric: d.metric,
        deviation: d.deviation,
        tolerance: d.tolerance,
        in_band: d.in_band,
      });
    }
    if (payload.phase_transition) {
      this.timeline.push({ tick: payload.tick, kind: "phase", label: payload.phase });
    }
    for (const cmd of payload.commands) {
      this.timeline.push({
        tick: payload.tick,
        kind: cmd.purpose,
        label: `${cmd.purpose} ${cmd.channel} mode ${cmd.mode}`,
      });
    }
  }

  /** In-band proportion for a metric, or null if its envelope never applied. */
  proportion(metric: string): number | null {
    const c = this.counts.get(metric);
    return c && c.n > 0 ? c.in / c.n : null;
  }

  proportions(): Record<string, number | null> {
    return {
      altitude_in_band_proportion: this.proportion("altitude_ft"),
      bank_in_band_proportion: this.proportion("bank_deg"),
      speed_in_band_proportion: this.proportion("ias_kt"),
    };
  }

  preStartMarkers(): TimelineEntry[] {
    return this.timeline.filter((t) => t.kind === "pre_start");
  }

  get isEmpty(): boolean {
    return this.ticks === 0;
  }
}

export function round3(x: number | null): number | null {
  return x === null ? null : Math.round(x * 1000) / 1000;
}

// --- evaluation-report (JSON) view -----------------------------------------

export interface EvalRow {
  label: string;
  records: number | null;
  accuracyPct: number | null;
  referencePct: number | null;
  isReference: boolean;
}

export function evalRows(evalJson: unknown): EvalRow[] {
  const obj = evalJson as {
    per_task?: Record<string, { records: number; accuracy: number }>;
    total?: { records: number; accuracy: number };
    reference?: { label: string; accuracy_pct: Record<string, number> };
  };
  const rows: EvalRow[] = [];
  const ref = obj.reference?.accuracy_pct ?? {};
  for (const [task, score] of Object.entries(obj.per_task ?? {})) {
    rows.push({
      label: task,
      records: score.records,
      accuracyPct: score.accuracy * 100,
      referencePct: ref[task] ?? null,
      isReference: false,
    });
  }
  if (obj.total) {
    rows.push({
      label: "total",
      records: obj.total.records,
      accuracyPct: obj.total.accuracy * 100,
      referencePct: ref.total ?? null,
      isReference: false,
    });
  }
  if (obj.reference) {
    rows.push({
      label: obj.reference.label,
      records: null,
      accuracyPct: null,
      referencePct: ref.total ?? null,
      isReference: true,
    });
  }
  return rows;
}
