/**
 * Wire format and injectable environment for the cursor collector.
 *
 * One batch per line, matching the analysis pipeline's parser exactly:
 * `{"session":"<id>","page":"<id>","load_epoch":<int>,"events":[[t_ms,x,y],...]}`
 */

/** [t_ms since page load, x CSS px, y CSS px] */
export type WireEvent = [number, number, number];

export interface WireBatch {
  session: string;
  page: string;
  load_epoch: number;
  events: WireEvent[];
}

export interface MouseEventLike {
  clientX: number;
  clientY: number;
}

/** The slice of Document the collector touches (injectable in tests). */
export interface EventTargetLike {
  addEventListener(type: string, listener: (ev: any) => void): void;
  removeEventListener(type: string, listener: (ev: any) => void): void;
}

/** Returns true when the payload was accepted for delivery. */
export type Transport = (body: string) => boolean | Promise<boolean>;

export interface CollectorEnv {
  /** epoch milliseconds */
  now(): number;
  target: EventTargetLike;
  /** where pagehide fires (window in browsers); defaults to target */
  hideTarget?: EventTargetLike;
  transport: Transport;
  /** synchronous beacon path for the final flush (page hide survives it) */
  beacon?: (body: string) => boolean;
  setInterval(fn: () => void, ms: number): unknown;
  clearInterval(handle: unknown): void;
  scrollPosition?: () => [number, number];
  log?: (message: string) => void;
}

export interface CollectorOptions {
  sessionId: string;
  pageId: string;
  endpoint: string;
  /** batch cadence; the production default is ten seconds */
  flushIntervalMs?: number;
  /** unsent batches kept across failures before the oldest is dropped */
  maxBufferedBatches?: number;
  /** optional mousemove throttle; 0 keeps the raw cadence */
  minEventIntervalMs?: number;
  env?: Partial<CollectorEnv>;
}
