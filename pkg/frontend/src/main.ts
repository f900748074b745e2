// Wires the stream, controls, instruments, cue diagram, voice, and report
// together against the gateway this page is served from.

import { ControlPoster, StickModel } from "./controls.js";
import { CueModel } from "./cues.js";
import { drawArm, drawPanel } from "./instruments.js";
import { ReportModel, round3 } from "./report.js";
import { BrowserSpeech, phraseFor } from "./speech.js";
import { StreamClient } from "./stream.js";
import { EndPayloadView, TickPayloadView } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const banner = el<HTMLDivElement>("banner");
const panel = el<HTMLCanvasElement>("panel");
const arm = el<HTMLCanvasElement>("arm");
const guidanceBox = el<HTMLDivElement>("guidance");
const reportBox = el<HTMLDivElement>("report");
const statusBox = el<HTMLSpanElement>("status");

const report = new ReportModel();
const cues = new CueModel();
const speech = new BrowserSpeech((text) => showBanner(`voice: ${text}`));
let lastTick: TickPayloadView | null = null;

function showBanner(text: string, tone: "info" | "warn" = "info"): void {
  banner.textContent = text;
  banner.className = tone;
  banner.style.display = text ? "block" : "none";
}

function onTick(payload: TickPayloadView): void {
  lastTick = payload;
  for (const command of payload.commands) {
    cues.start(command, performance.now());
  }
  for (const v of payload.voice) {
    speech.speak(phraseFor(v.instrument));
  }
  report.observe(payload);
  guidanceBox.textContent = payload.guidance ?? "";
  statusBox.textContent =
    `tick ${payload.tick} · ${payload.phase}` +
    (payload.worst ? ` · deviating: ${payload.worst}` : " · on profile");
}

function onEnd(payload: EndPayloadView): void {
  const own = report.proportions();
  const rows = [
    ["ticks", String(payload.ticks)],
    ["altitude in band", fmt(own.altitude_in_band_proportion)],
    ["bank in band", fmt(own.bank_in_band_proportion)],
    ["speed in band", fmt(own.speed_in_band_proportion)],
    ["completion time", payload.metrics.task_completion_time_s == null
      ? "not completed"
      : `${payload.metrics.task_completion_time_s} s`],
    ["pre-start cues", String(report.preStartMarkers().length)],
  ];
  reportBox.innerHTML =
    "<h3>Session report</h3>" +
    "<table>" +
    rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("") +
    "</table>";
}

function fmt(x: number | null): string {
  const r = round3(x);
  return r === null ? "n/a" : r.toFixed(3);
}

const stream = new StreamClient(
  `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws/stream`,
  {
    onPayload(payload) {
      if (payload.type === "tick") onTick(payload);
      else if (payload.type === "end") onEnd(payload);
      else if (payload.type === "error") showBanner(payload.detail, "warn");
      else showBanner("");
    },
    onStatus(connected, detail) {
      if (connected) showBanner("");
      else showBanner(detail, "warn");
    },
  },
);
stream.connect();

// controls: keyboard ramp plus optional gamepad, posted at up to 20 Hz
const stick = new StickModel();
const poster = new ControlPoster((c) =>
  fetch("/api/controls", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(c),
  }),
);
window.addEventListener("keydown", (ev) => stick.keyDown(ev.key));
window.addEventListener("keyup", (ev) => stick.keyUp(ev.key));

let lastSample = performance.now();
setInterval(() => {
  const now = performance.now();
  const dt = (now - lastSample) / 1000;
  lastSample = now;
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (pad) {
    stick.setAxes(pad.axes[0] ?? 0, -(pad.axes[1] ?? 0));
    if (pad.buttons[7]) stick.setThrottle(pad.buttons[7].value);
  }
  poster.maybeSend(stick.step(dt));
}, 50);

// render loop: instruments from the last payload, cues pruned by duration
function frame(): void {
  if (lastTick) drawPanel(panel, lastTick.state, lastTick.deviations);
  cues.prune(performance.now());
  drawArm(arm, cues.channelLevels(performance.now()));
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

// session start/stop buttons
el<HTMLButtonElement>("start").addEventListener("click", async () => {
  report.deviationSeries.length = 0;
  const body = {
    task_id: (el<HTMLSelectElement>("task")).value,
    pilot: (el<HTMLSelectElement>("pilot")).value,
    assist: true,
    seed: Math.floor(Math.random() * 1000),
    time_scale: 1.0,
  };
  const resp = await fetch("/api/session/start", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) showBanner(`start failed: ${await resp.text()}`, "warn");
});
el<HTMLButtonElement>("stop").addEventListener("click", () => {
  void fetch("/api/session/stop", { method: "POST" });
});
