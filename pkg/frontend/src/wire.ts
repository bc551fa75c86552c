/** Serialization of collector batches to the line-delimited wire format. */

import type { WireBatch } from "./types.js";

/**
 * One wire-format line. Keys are emitted in the parser's documented
 * order with compact separators so the framing is byte-stable.
 */
export function formatBatchLine(batch: WireBatch): string {
  const events = batch.events
    .map(([t, x, y]) => `[${t},${x},${y}]`)
    .join(",");
  return (
    `{"session":${JSON.stringify(batch.session)}` +
    `,"page":${JSON.stringify(batch.page)}` +
    `,"load_epoch":${batch.load_epoch}` +
    `,"events":[${events}]}`
  );
}

export function parseBatchLine(line: string): WireBatch {
  const obj = JSON.parse(line);
  return {
    session: String(obj.session),
    page: String(obj.page),
    load_epoch: Number(obj.load_epoch),
    events: (obj.events as [number, number, number][]).map(([t, x, y]) => [t, x, y]),
  };
}
