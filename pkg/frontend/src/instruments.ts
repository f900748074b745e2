// Canvas cockpit instruments. Pure drawing: every needle position comes
// from the last tick payload.

import { DeviationView, FlightStateView } from "./types.js";

const TAU = Math.PI * 2;

function dial(ctx: CanvasRenderingContext2D, cx: number, cy: number, r: number, label: string) {
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, TAU);
  ctx.fillStyle = "#101418";
  ctx.fill();
  ctx.strokeStyle = "#3a4750";
  ctx.lineWidth = 2;
  ctx.stroke();
  ctx.fillStyle = "#8fa3ad";
  ctx.font = "10px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(label, cx, cy + r - 8);
}

function needle(ctx: CanvasRenderingContext2D, cx: number, cy: number, r: number,
                angleRad: number, color = "#e8e6e3") {
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + Math.sin(angleRad) * r, cy - Math.cos(angleRad) * r);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.stroke();
}

function text(ctx: CanvasRenderingContext2D, cx: number, cy: number, value: string,
              color = "#e8e6e3") {
  ctx.fillStyle = color;
  ctx.font = "bold 13px monospace";
  ctx.textAlign = "center";
  ctx.fillText(value, cx, cy);
}

export function bandColor(deviations: DeviationView[], metric: string): string {
  const dev = deviations.find((d) => d.metric === metric);
  if (!dev) return "#e8e6e3";
  return dev.in_band ? "#6fd08c" : "#e06a6a";
}

export function drawPanel(
  canvas: HTMLCanvasElement,
  state: FlightStateView,
  deviations: DeviationView[],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const r = Math.min(w / 6.6, h / 2.4);
  const y = h / 2;
  const xs = [0.1, 0.3, 0.5, 0.7, 0.9].map((f) => f * w);

  // airspeed: 40..180 kt over 300 degrees
  dial(ctx, xs[0], y, r, "AIRSPEED kt");
  needle(ctx, xs[0], y, r * 0.8, ((state.ias_kt - 40) / 140) * (TAU * 0.83) - TAU * 0.415,
         bandColor(deviations, "ias_kt"));
  text(ctx, xs[0], y - 10, state.ias_kt.toFixed(0), bandColor(deviations, "ias_kt"));

  // attitude: horizon bar by pitch, rotated by bank
  dial(ctx, xs[1], y, r, "ATTITUDE");
  ctx.save();
  ctx.translate(xs[1], y);
  ctx.rotate((-state.bank_deg * Math.PI) / 180);
  const horizon = (state.pitch_deg / 30) * r * 0.6;
  ctx.strokeStyle = bandColor(deviations, "bank_deg");
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(-r * 0.7, horizon);
  ctx.lineTo(r * 0.7, horizon);
  ctx.stroke();
  ctx.restore();
  text(ctx, xs[1], y + r * 0.55, `${state.bank_deg.toFixed(0)}°`,
       bandColor(deviations, "bank_deg"));

  // altimeter: hundreds needle
  dial(ctx, xs[2], y, r, "ALTITUDE ft");
  needle(ctx, xs[2], y, r * 0.8, ((state.altitude_ft % 1000) / 1000) * TAU,
         bandColor(deviations, "altitude_ft"));
  text(ctx, xs[2], y - 10, state.altitude_ft.toFixed(0),
       bandColor(deviations, "altitude_ft"));

  // heading rose
  dial(ctx, xs[3], y, r, "HEADING");
  needle(ctx, xs[3], y, r * 0.8, (state.heading_deg * Math.PI) / 180,
         bandColor(deviations, "heading_deg"));
  text(ctx, xs[3], y - 10, state.heading_deg.toFixed(0).padStart(3, "0"),
       bandColor(deviations, "heading_deg"));

  // vertical speed: +-2000 fpm over a half turn
  dial(ctx, xs[4], y, r, "VS fpm");
  needle(ctx, xs[4], y, r * 0.8,
         Math.max(-1, Math.min(1, state.vs_fpm / 2000)) * (Math.PI / 2) + Math.PI / 2,
         bandColor(deviations, "vs_fpm"));
  text(ctx, xs[4], y - 10, state.vs_fpm.toFixed(0), bandColor(deviations, "vs_fpm"));
}

export function drawArm(
  canvas: HTMLCanvasElement,
  levels: Record<string, number>,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);

  // forearm
  ctx.fillStyle = "#2a323a";
  ctx.fillRect(w * 0.35, h * 0.15, w * 0.3, h * 0.7);
  ctx.fillStyle = "#8fa3ad";
  ctx.font = "10px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText("forearm", w * 0.5, h * 0.08);

  const pads: Record<string, [number, number, string]> = {
    left: [w * 0.28, h * 0.5, "left"],
    right: [w * 0.72, h * 0.5, "right"],
    fwd: [w * 0.5, h * 0.25, "fwd"],
    back: [w * 0.5, h * 0.75, "back"],
  };
  for (const [channel, [x, y, label]] of Object.entries(pads)) {
    const level = levels[channel] ?? 0;
    ctx.beginPath();
    ctx.arc(x, y, 12 + level * 10, 0, TAU);
    ctx.fillStyle = level > 0 ? `rgba(235, 181, 62, ${0.25 + 0.75 * level})` : "#20262c";
    ctx.fill();
    ctx.strokeStyle = "#3a4750";
    ctx.stroke();
    ctx.fillStyle = "#c7d3da";
    ctx.fillText(label, x, y + 28);
  }
}
