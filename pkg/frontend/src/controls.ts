// Keyboard/gamepad sampling into {stick_x, stick_y, throttle} posts.
// Latest-wins at up to 20 Hz; no input means neutral stick with the last
// throttle setting kept.

export interface ControlsOut {
  stick_x: number;
  stick_y: number;
  throttle: number;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

export class StickModel {
  stickX = 0;
  stickY = 0;
  throttle = 0;
  private held = new Set<string>();

  constructor(
    readonly rampPerSecond = 2.0, // full deflection in half a second of hold
    readonly returnPerSecond = 3.0,
  ) {}

  keyDown(key: string): void {
    this.held.add(key);
  }

  keyUp(key: string): void {
    this.held.delete(key);
  }

  /** Advance the ramp integrator by dt seconds. */
  step(dt: number): ControlsOut {
    const dir = (neg: string, pos: string) =>
      (this.held.has(pos) ? 1 : 0) - (this.held.has(neg) ? 1 : 0);

    const dx = dir("ArrowLeft", "ArrowRight");
    const dy = dir("ArrowDown", "ArrowUp"); // up arrow = pull / pitch up
    this.stickX = this.integrate(this.stickX, dx, dt);
    this.stickY = this.integrate(this.stickY, dy, dt);

    const dThrottle = dir("s", "w") + dir("S", "W");
    this.throttle = clamp(this.throttle + 0.5 * dThrottle * dt, 0, 1);
    return this.snapshot();
  }

  /** Absolute axes from a gamepad override the keyboard ramp. */
  setAxes(x: number, y: number): void {
    this.stickX = clamp(x, -1, 1);
    this.stickY = clamp(y, -1, 1);
  }

  setThrottle(t: number): void {
    this.throttle = clamp(t, 0, 1);
  }

  snapshot(): ControlsOut {
    return { stick_x: this.stickX, stick_y: this.stickY, throttle: this.throttle };
  }

  private integrate(value: number, direction: number, dt: number): number {
    if (direction !== 0) {
      return clamp(value + direction * this.rampPerSecond * dt, -1, 1);
    }
    // released: spring back toward neutral
    const back = this.returnPerSecond * dt;
    if (Math.abs(value) <= back) return 0;
    return value - Math.sign(value) * back;
  }
}

export class ControlPoster {
  lastAcknowledged: ControlsOut | null = null;
  private lastSentAt = -Infinity;
  private lastSent: ControlsOut | null = null;

  constructor(
    private readonly post: (c: ControlsOut) => Promise<unknown>,
    readonly minIntervalMs = 50, // 20 Hz ceiling
    private readonly now: () => number = () => performance.now(),
  ) {}

  /** Send if the rate limit allows; dropped sends are skipped, never queued. */
  maybeSend(controls: ControlsOut): boolean {
    const t = this.now();
    if (t - this.lastSentAt < this.minIntervalMs) return false;
    this.lastSentAt = t;
    this.lastSent = controls;
    this.post(controls)
      .then(() => {
        this.lastAcknowledged = controls;
      })
      .catch(() => {
        /* dropped; the next sample wins */
      });
    return true;
  }

  get pending(): ControlsOut | null {
    return this.lastSent;
  }
}
