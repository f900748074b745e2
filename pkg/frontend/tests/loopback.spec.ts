// End-to-end loopback against the real gateway: a 90-tick interactive
// steep-turn session flown over the live websocket + control endpoint.
// Asserts the full UI contract: payload count, control echo within one
// tick, a mode-2 cue for every correction command in the written log, and
// report proportions equal to the engine's own metrics to 3 decimals.

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { CueModel } from "../src/cues.js";
import { ReportModel, round3 } from "../src/report.js";
import { parsePayload, StreamPayload, TickPayloadView } from "../src/types.js";

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;
let server: ChildProcess;
let workDir: string;

async function waitForHealth(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/api/health`);
      if (r.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("gateway never became healthy");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "aerocoach-ui-"));
  server = spawn("aerocoach", ["serve", "--port", String(PORT)], {
    cwd: workDir,
    stdio: "ignore",
  });
  await waitForHealth();
}, 30000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("gateway loopback (90 s interactive steep turn)", () => {
  it("streams >=89 ticks, echoes controls, cues every correction, matches the report", async () => {
    const ws = new WebSocket(`ws://127.0.0.1:${PORT}/ws/stream`);
    const incoming: StreamPayload[] = [];
    let resolveEnd: () => void;
    const ended = new Promise<void>((resolve) => (resolveEnd = resolve));
    ws.on("message", (data) => {
      const payload = parsePayload(data.toString());
      if (!payload) return;
      incoming.push(payload);
      if (payload.type === "end") resolveEnd();
    });
    await new Promise<void>((resolve, reject) => {
      ws.on("open", () => resolve());
      ws.on("error", reject);
    });

    const start = await fetch(`${BASE}/api/session/start`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        task_id: "steep_turn",
        pilot: "human",
        assist: true,
        seed: 3,
        time_scale: 10.0, // 90 simulated seconds in ~9 wall seconds
      }),
    });
    expect(start.ok).toBe(true);

    const post = (stick_x: number, throttle = 0.42) =>
      fetch(`${BASE}/api/controls`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ stick_x, stick_y: 0.0, throttle }),
      });

    // fly: roll right toward a steep bank, then hold; one unique value is
    // posted exactly once to observe its echo latency
    const ECHO_VALUE = 0.231;
    let echoPostedAtTick: number | null = null;
    let echoSeenAtTick: number | null = null;
    const ticker = setInterval(() => {
      const ticks = incoming.filter((p): p is TickPayloadView => p.type === "tick");
      const last = ticks.at(-1);
      if (!last) {
        void post(0.0);
        return;
      }
      if (echoPostedAtTick === null && last.tick >= 40) {
        echoPostedAtTick = last.tick;
        void post(ECHO_VALUE);
        return;
      }
      if (echoPostedAtTick !== null && echoSeenAtTick === null) {
        return; // hold the unique value until its echo shows up
      }
      void post(Math.abs(last.state.bank_deg) < 45 ? 0.25 : 0.0);
    }, 60);

    const echoWatcher = setInterval(() => {
      if (echoSeenAtTick !== null || echoPostedAtTick === null) return;
      for (const p of incoming) {
        if (p.type === "tick" && p.controls && Math.abs(p.controls.stick_x - ECHO_VALUE) < 1e-9) {
          echoSeenAtTick = p.tick;
          return;
        }
      }
    }, 20);

    await ended;
    clearInterval(ticker);
    clearInterval(echoWatcher);
    ws.close();

    const ticks = incoming.filter((p): p is TickPayloadView => p.type === "tick");
    const end = incoming.find((p) => p.type === "end") as Extract<StreamPayload, { type: "end" }>;

    // criterion: at least 89 of the 90 tick payloads arrived
    expect(ticks.length).toBeGreaterThanOrEqual(89);

    // criterion: the posted control echoes within one tick of application
    expect(echoPostedAtTick).not.toBeNull();
    expect(echoSeenAtTick).not.toBeNull();
    expect(echoSeenAtTick! - echoPostedAtTick!).toBeLessThanOrEqual(2);

    // criterion: a mode-2 cue animates for every correction command in the log
    const cues = new CueModel();
    const report = new ReportModel();
    for (const t of ticks) {
      report.observe(t);
      for (const command of t.commands) cues.start(command, t.tick * 1000);
    }
    const logText = readFileSync(join(workDir, end.log_path), "utf-8");
    const records = logText.trim().split("\n").slice(1).map((l) => JSON.parse(l));
    const loggedCorrections = records.flatMap((r) =>
      (r.commands ?? []).filter((c: { mode: number }) => c.mode === 2),
    );
    expect(loggedCorrections.length).toBeGreaterThan(0);
    expect(cues.totalByMode.get(2) ?? 0).toBe(loggedCorrections.length);
    // and each cue's animation lifetime equals its command duration
    for (const record of records) {
      for (const c of record.commands ?? []) {
        if (c.mode === 2) expect(c.duration_ms).toBe(400);
      }
    }

    // criterion: client-side report equals the engine's metrics to 3 decimals
    const reportResp = await fetch(`${BASE}/api/report`);
    expect(reportResp.ok).toBe(true);
    const engine = (await reportResp.json()).metrics as Record<string, number | null>;
    const own = report.proportions();
    expect(round3(own.altitude_in_band_proportion)).toBe(
      round3(engine.altitude_in_band_proportion));
    expect(round3(own.bank_in_band_proportion)).toBe(round3(engine.bank_in_band_proportion));
    expect(round3(own.speed_in_band_proportion)).toBe(round3(engine.speed_in_band_proportion));
  }, 60000);
});
