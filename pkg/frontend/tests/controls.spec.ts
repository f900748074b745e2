import { describe, expect, it } from "vitest";

import { ControlPoster, StickModel } from "../src/controls.js";

describe("stick ramp model", () => {
  it("ramps to full right deflection while the key is held", () => {
    const stick = new StickModel();
    stick.keyDown("ArrowRight");
    let out = stick.step(0.1);
    expect(out.stick_x).toBeGreaterThan(0);
    expect(out.stick_x).toBeLessThan(1);
    for (let i = 0; i < 20; i++) out = stick.step(0.1);
    expect(out.stick_x).toBe(1);
  });

  it("springs back to neutral on release, keeping throttle", () => {
    const stick = new StickModel();
    stick.setThrottle(0.6);
    stick.keyDown("ArrowUp");
    stick.step(0.3);
    stick.keyUp("ArrowUp");
    let out = stick.snapshot();
    for (let i = 0; i < 20; i++) out = stick.step(0.1);
    expect(out).toEqual({ stick_x: 0, stick_y: 0, throttle: 0.6 });
  });

  it("no input means neutral stick", () => {
    const stick = new StickModel();
    expect(stick.step(0.05)).toEqual({ stick_x: 0, stick_y: 0, throttle: 0 });
  });

  it("opposite keys cancel; throttle keys integrate within [0,1]", () => {
    const stick = new StickModel();
    stick.keyDown("ArrowLeft");
    stick.keyDown("ArrowRight");
    expect(stick.step(0.2).stick_x).toBe(0);
    stick.keyDown("w");
    for (let i = 0; i < 100; i++) stick.step(0.1);
    expect(stick.snapshot().throttle).toBe(1);
  });

  it("gamepad axes override and clamp", () => {
    const stick = new StickModel();
    stick.setAxes(1.7, -2.0);
    expect(stick.snapshot().stick_x).toBe(1);
    expect(stick.snapshot().stick_y).toBe(-1);
  });
});

describe("control poster", () => {
  it("rate-limits to 20 Hz, latest wins, never queues", async () => {
    let now = 0;
    const sent: number[] = [];
    const poster = new ControlPoster(
      async (c) => { sent.push(c.stick_x); },
      50,
      () => now,
    );
    expect(poster.maybeSend({ stick_x: 0.1, stick_y: 0, throttle: 0 })).toBe(true);
    now = 20;
    expect(poster.maybeSend({ stick_x: 0.2, stick_y: 0, throttle: 0 })).toBe(false);
    now = 49;
    expect(poster.maybeSend({ stick_x: 0.3, stick_y: 0, throttle: 0 })).toBe(false);
    now = 50;
    expect(poster.maybeSend({ stick_x: 0.4, stick_y: 0, throttle: 0 })).toBe(true);
    await Promise.resolve();
    expect(sent).toEqual([0.1, 0.4]); // the dropped samples were skipped
    expect(poster.lastAcknowledged?.stick_x).toBe(0.4);
  });

  it("a failed post does not update the acknowledged echo", async () => {
    let now = 0;
    const poster = new ControlPoster(
      async () => { throw new Error("offline"); },
      50,
      () => now,
    );
    poster.maybeSend({ stick_x: 0.5, stick_y: 0, throttle: 0 });
    await new Promise((r) => setTimeout(r, 0));
    expect(poster.lastAcknowledged).toBeNull();
    expect(poster.pending?.stick_x).toBe(0.5);
  });
});
