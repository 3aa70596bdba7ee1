/** Training dashboard state: status polling, loss traces, progress checks. */

import { ApiClient, StatusResponse } from "./api.js";

export interface LossPoint {
  scale: number;
  step: number;
  losses: Record<string, number>;
}

export class Dashboard {
  readonly history: StatusResponse[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly projectId: string,
    readonly intervalMs = 1000,
  ) {}

  latest(): StatusResponse | null {
    return this.history.length ? this.history[this.history.length - 1] : null;
  }

  async pollOnce(): Promise<StatusResponse> {
    const status = await this.client.getStatus(this.projectId);
    this.history.push(status);
    return status;
  }

  /** Poll on a fixed interval until training leaves the running state. */
  start(onUpdate?: (status: StatusResponse) => void): void {
    if (this.timer) return;
    this.timer = setInterval(async () => {
      try {
        const status = await this.pollOnce();
        onUpdate?.(status);
        if (status.status === "trained" || status.status === "failed") {
          this.stop();
        }
      } catch {
        // transient poll errors surface on the next tick
      }
    }, this.intervalMs);
  }

  stop(): void {
    if (this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** Generation controls unlock only once the model is trained. */
  canGenerate(): boolean {
    return this.latest()?.status === "trained";
  }

  failureReason(): string | null {
    const latest = this.latest();
    return latest?.status === "failed" ? latest.error ?? "unknown failure" : null;
  }

  /** (stage, step) pairs observed so far; the stream must never go backwards. */
  progressLog(): Array<[number, number]> {
    return this.history
      .filter(
        (s): s is StatusResponse & { scale: number; step: number } =>
          s.status === "training" && s.scale != null && s.step != null,
      )
      .map((s) => [s.scale, s.step] as [number, number]);
  }

  progressIsMonotone(): boolean {
    const log = this.progressLog();
    for (let i = 1; i < log.length; i++) {
      const [prevScale, prevStep] = log[i - 1];
      const [scale, step] = log[i];
      if (scale < prevScale || (scale === prevScale && step < prevStep)) {
        return false;
      }
    }
    return true;
  }

  lossSeries(key: string): LossPoint[] {
    return this.history
      .filter((s) => s.status === "training" && s.losses && key in s.losses)
      .map((s) => ({
        scale: s.scale ?? 0,
        step: s.step ?? 0,
        losses: s.losses as Record<string, number>,
      }));
  }
}

/** Fit values into an SVG polyline path (the sparkline rendering). */
export function sparklinePath(
  values: number[],
  width: number,
  height: number,
): string {
  if (values.length === 0) return "";
  if (values.length === 1) return `M0,${(height / 2).toFixed(1)}`;
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  return values
    .map((v, i) => {
      const x = (i / (values.length - 1)) * width;
      const y = height - ((v - lo) / span) * height;
      return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join("");
}
