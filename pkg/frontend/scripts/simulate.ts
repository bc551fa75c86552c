/**
 * Scripted 25-second capture session for the cross-language round trip.
 *
 * Drives a CaptureSession with a deterministic movement script against an
 * injected clock and transport, then prints the transmitted wire lines to
 * stdout (one batch per line) followed by a JSON summary on stderr. The
 * analysis pipeline's parser must accept the lines with zero diagnostics
 * and reconstruct the scripted event count exactly.
 *
 * Usage: node dist/scripts/simulate.js [--fail-one-flush]
 */

import { CaptureSession } from "../src/collector.js";

class ScriptClock {
  epoch = 1_700_000_000_000;
  private timers: Array<{ fn: () => void; ms: number; next: number; id: number }> = [];
  private nextId = 1;

  now = () => this.epoch;
  setInterval = (fn: () => void, ms: number) => {
    const id = this.nextId++;
    this.timers.push({ fn, ms, next: this.epoch + ms, id });
    return id;
  };
  clearInterval = (handle: unknown) => {
    this.timers = this.timers.filter((t) => t.id !== handle);
  };

  async tick(ms: number): Promise<void> {
    const end = this.epoch + ms;
    for (;;) {
      const due = this.timers
        .filter((t) => t.next <= end)
        .sort((a, b) => a.next - b.next)[0];
      if (!due) break;
      this.epoch = due.next;
      due.next += due.ms;
      due.fn();
      for (let i = 0; i < 5; i++) await Promise.resolve();
    }
    this.epoch = end;
  }
}

class Listeners {
  map = new Map<string, Set<(ev: any) => void>>();
  addEventListener(type: string, fn: (ev: any) => void) {
    if (!this.map.has(type)) this.map.set(type, new Set());
    this.map.get(type)!.add(fn);
  }
  removeEventListener(type: string, fn: (ev: any) => void) {
    this.map.get(type)?.delete(fn);
  }
  dispatch(type: string, ev: any) {
    for (const fn of this.map.get(type) ?? []) fn(ev);
  }
}

async function main() {
  const failOne = process.argv.includes("--fail-one-flush");
  const clock = new ScriptClock();
  const target = new Listeners();
  const sent: string[] = [];
  let failures = failOne ? 1 : 0;
  const transport = (body: string) => {
    if (failures > 0) {
      failures -= 1;
      return false;
    }
    sent.push(body);
    return true;
  };

  const session = new CaptureSession({
    sessionId: "sim-respondent",
    pageId: "sim-question",
    endpoint: "stdout://",
    env: {
      now: clock.now,
      target,
      transport,
      setInterval: clock.setInterval,
      clearInterval: clock.clearInterval,
      scrollPosition: () => [0, 0],
      log: () => {},
    },
  });

  // 25 seconds of scripted movement: one event every 250 ms along a
  // deterministic curve, all positions distinct
  let scripted = 0;
  for (let i = 0; i < 100; i++) {
    await clock.tick(250);
    target.dispatch("mousemove", {
      clientX: 100 + i,
      clientY: 400 + ((i * 7) % 191),
    });
    scripted += 1;
  }
  await session.finalFlush();
  session.stop();

  for (const body of sent) process.stdout.write(body + "\n");
  process.stderr.write(
    JSON.stringify({
      scripted_events: scripted,
      transmissions: sent.length,
      dropped_batches: session.droppedBatches,
      submit_t_ms: clock.now() - session.loadEpoch,
    }) + "\n"
  );
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
