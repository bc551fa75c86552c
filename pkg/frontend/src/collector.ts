/**
 * Browser-side cursor capture.
 *
 * A CaptureSession listens for mousemove events, buffers positions with
 * timestamps relative to page load, and flushes one wire-format batch
 * every ten seconds plus a final beacon-backed flush on page hide. Failed
 * transmissions are retained and retried on the next flush, up to a
 * bounded number of batches (oldest dropped first, counted).
 *
 * Coordinates are viewport CSS pixels; the scroll offset at each batch
 * cut is recorded on the session for future use but not transmitted.
 */

import type {
  CollectorEnv,
  CollectorOptions,
  MouseEventLike,
  WireBatch,
  WireEvent,
} from "./types.js";
import { formatBatchLine } from "./wire.js";

const DEFAULT_FLUSH_MS = 10_000;
const DEFAULT_MAX_BUFFERED = 50;

function defaultEnv(endpoint: string): CollectorEnv {
  // guarded lookups so constructing the defaults never throws under Node
  const doc = typeof document !== "undefined" ? document : undefined;
  const win = typeof window !== "undefined" ? window : undefined;
  return {
    now: () => Date.now(),
    target: doc as unknown as CollectorEnv["target"],
    hideTarget: (win ?? doc) as unknown as CollectorEnv["target"],
    transport: async (body: string) => {
      try {
        const res = await fetch(endpoint, {
          method: "POST",
          headers: { "Content-Type": "text/plain" },
          body,
          keepalive: true,
        });
        return res.ok;
      } catch {
        return false;
      }
    },
    beacon: (body: string) =>
      typeof navigator !== "undefined" && typeof navigator.sendBeacon === "function"
        ? navigator.sendBeacon(endpoint, new Blob([body], { type: "text/plain" }))
        : false,
    setInterval: (fn, ms) => setInterval(fn, ms),
    clearInterval: (handle) => clearInterval(handle as number),
    scrollPosition: () =>
      typeof window !== "undefined" ? [window.scrollX, window.scrollY] : [0, 0],
    log: (message) => console.warn(`[collector] ${message}`),
  };
}

/** Sessions active per page, to make double starts a no-op. */
const active = new Map<string, CaptureSession>();

export class CaptureSession {
  readonly sessionId: string;
  readonly pageId: string;
  readonly loadEpoch: number;
  /** batches dropped because the retry buffer hit its cap */
  droppedBatches = 0;
  /** scroll offset recorded at each batch cut: [t_ms, x, y] */
  readonly scrollHistory: Array<[number, number, number]> = [];

  private env: CollectorEnv;
  private flushIntervalMs: number;
  private maxBuffered: number;
  private minEventIntervalMs: number;
  private events: WireEvent[] = [];
  private pending: WireBatch[] = [];
  private sending = new Set<WireBatch>();
  private lastEvent: WireEvent | null = null;
  private timer: unknown = null;
  private listener: ((ev: MouseEventLike) => void) | null = null;
  private hideListener: (() => void) | null = null;
  private stopped = false;

  constructor(options: CollectorOptions) {
    this.sessionId = options.sessionId;
    this.pageId = options.pageId;
    this.env = { ...defaultEnv(options.endpoint), ...(options.env ?? {}) };
    this.flushIntervalMs = options.flushIntervalMs ?? DEFAULT_FLUSH_MS;
    this.maxBuffered = options.maxBufferedBatches ?? DEFAULT_MAX_BUFFERED;
    this.minEventIntervalMs = options.minEventIntervalMs ?? 0;
    this.loadEpoch = this.env.now();

    this.listener = (ev: MouseEventLike) => this.record(ev.clientX, ev.clientY);
    this.env.target.addEventListener("mousemove", this.listener);
    this.hideListener = () => void this.finalFlush();
    this.hideTarget().addEventListener("pagehide", this.hideListener);
    this.timer = this.env.setInterval(() => void this.flush(), this.flushIntervalMs);
  }

  /** Buffer one cursor position; stationary repeats are not events. */
  record(x: number, y: number): void {
    if (this.stopped) return;
    let t = Math.max(0, Math.round(this.env.now() - this.loadEpoch));
    const last = this.lastEvent;
    if (last && last[1] === x && last[2] === y) return;
    if (last && this.minEventIntervalMs > 0 && t - last[0] < this.minEventIntervalMs) {
      return;
    }
    if (last && t === last[0] && this.events.length > 0) {
      // same-millisecond movement within the batch: keep the newest
      // position so the wire stream never carries duplicate timestamps
      this.events[this.events.length - 1] = [t, x, y];
      this.lastEvent = [t, x, y];
      return;
    }
    if (last && t <= last[0]) {
      // the previous batch owns that millisecond (or the clock stepped
      // back); nudging forward keeps timestamps strictly increasing
      t = last[0] + 1;
    }
    const event: WireEvent = [t, x, y];
    this.events.push(event);
    this.lastEvent = event;
  }

  /** Cut the current buffer into a batch (empty batches are heartbeats). */
  private cutBatch(): WireBatch {
    const batch: WireBatch = {
      session: this.sessionId,
      page: this.pageId,
      load_epoch: this.loadEpoch,
      events: this.events,
    };
    const [sx, sy] = this.env.scrollPosition ? this.env.scrollPosition() : [0, 0];
    this.scrollHistory.push([Math.round(this.env.now() - this.loadEpoch), sx, sy]);
    this.events = [];
    return batch;
  }

  /**
   * Transmit everything pending as newline-delimited wire lines.
   * On failure the batches stay buffered for the next flush, bounded by
   * the cap (oldest dropped, counted). Batches already in flight are
   * skipped, so overlapping flushes never send the same batch twice.
   */
  async flush(transport = this.env.transport): Promise<boolean> {
    this.pending.push(this.cutBatch());
    while (this.pending.length > this.maxBuffered) {
      const dropped = this.pending.shift();
      if (dropped && !this.sending.has(dropped)) this.droppedBatches += 1;
    }
    const toSend = this.pending.filter((b) => !this.sending.has(b));
    if (toSend.length === 0) return false;
    toSend.forEach((b) => this.sending.add(b));
    const body = toSend.map(formatBatchLine).join("\n");
    let ok = false;
    try {
      ok = await transport(body);
    } catch {
      ok = false;
    } finally {
      toSend.forEach((b) => this.sending.delete(b));
    }
    if (ok) {
      const sent = new Set(toSend);
      this.pending = this.pending.filter((b) => !sent.has(b));
    } else {
      this.env.log?.(`flush failed, retaining ${this.pending.length} batch(es)`);
    }
    return ok;
  }

  /** Beacon-backed flush for page hide; falls back to the transport. */
  async finalFlush(): Promise<boolean> {
    if (this.env.beacon) {
      this.pending.push(this.cutBatch());
      const toSend = this.pending.filter((b) => !this.sending.has(b));
      if (toSend.length === 0) return false;
      const body = toSend.map(formatBatchLine).join("\n");
      if (this.env.beacon(body)) {
        const sent = new Set(toSend);
        this.pending = this.pending.filter((b) => !sent.has(b));
        return true;
      }
      // beacon refused: retry through the regular transport
      toSend.forEach((b) => this.sending.add(b));
      let ok = false;
      try {
        ok = await this.env.transport(body);
      } catch {
        ok = false;
      } finally {
        toSend.forEach((b) => this.sending.delete(b));
      }
      if (ok) {
        const sent = new Set(toSend);
        this.pending = this.pending.filter((b) => !sent.has(b));
      }
      return ok;
    }
    return this.flush();
  }

  /** pagehide is a window event in real browsers; tests inject one target */
  private hideTarget() {
    return this.env.hideTarget ?? this.env.target;
  }

  /** Detach listeners and stop the flush timer (the buffer is kept). */
  stop(): void {
    if (this.stopped) return;
    this.stopped = true;
    if (this.timer !== null) this.env.clearInterval(this.timer);
    if (this.listener) this.env.target.removeEventListener("mousemove", this.listener);
    if (this.hideListener) this.hideTarget().removeEventListener("pagehide", this.hideListener);
    active.delete(this.pageId);
  }

  get bufferedEventCount(): number {
    return this.events.length;
  }

  get pendingBatchCount(): number {
    return this.pending.length;
  }
}

/**
 * Begin capturing on a page. Starting twice for the same page is a no-op
 * that returns the existing session (with a console diagnostic).
 */
export function startCapture(options: CollectorOptions): CaptureSession {
  const existing = active.get(options.pageId);
  if (existing) {
    const env = options.env ?? {};
    (env.log ?? ((m: string) => console.warn(`[collector] ${m}`)))(
      `capture already active for page ${options.pageId}; ignoring second start`
    );
    return existing;
  }
  const session = new CaptureSession(options);
  active.set(options.pageId, session);
  return session;
}

export function stopCapture(pageId: string): void {
  active.get(pageId)?.stop();
}
