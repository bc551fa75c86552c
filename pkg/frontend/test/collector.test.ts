import { describe, expect, it } from "vitest";

import { CaptureSession, startCapture, stopCapture } from "../src/collector.js";
import { formatBatchLine, parseBatchLine } from "../src/wire.js";
import { FakeClock, FakeTarget, FakeTransport, fakeEnv } from "./fakes.js";

function setup(options: Record<string, unknown> = {}) {
  const clock = new FakeClock();
  const target = new FakeTarget();
  const transport = new FakeTransport();
  const session = new CaptureSession({
    sessionId: "s1",
    pageId: "p1",
    endpoint: "http://example/ingest",
    env: fakeEnv(clock, target, transport),
    ...options,
  });
  return { clock, target, transport, session };
}

async function move(clock: FakeClock, target: FakeTarget, dt: number, x: number, y: number) {
  await clock.tick(dt);
  target.dispatch("mousemove", { clientX: x, clientY: y });
}

describe("wire format", () => {
  it("emits the exact schema framing", () => {
    const line = formatBatchLine({
      session: "abc",
      page: "q1",
      load_epoch: 123,
      events: [
        [5, 10, 20],
        [9, 11, 21],
      ],
    });
    expect(line).toBe('{"session":"abc","page":"q1","load_epoch":123,"events":[[5,10,20],[9,11,21]]}');
    expect(parseBatchLine(line).events.length).toBe(2);
  });
});

describe("capture", () => {
  it("buffers movements with page-load-relative timestamps", async () => {
    const { clock, target, session } = setup();
    await move(clock, target, 120, 5, 6);
    await move(clock, target, 30, 7, 8);
    expect(session.bufferedEventCount).toBe(2);
  });

  it("ignores stationary repeats", async () => {
    const { clock, target, session } = setup();
    await move(clock, target, 10, 5, 6);
    await move(clock, target, 10, 5, 6);
    expect(session.bufferedEventCount).toBe(1);
  });

  it("applies the optional throttle", async () => {
    const { clock, target, session } = setup({ minEventIntervalMs: 50 });
    await move(clock, target, 10, 1, 1);
    await move(clock, target, 10, 2, 2); // 10ms later: below the 50ms floor
    await move(clock, target, 60, 3, 3);
    expect(session.bufferedEventCount).toBe(2);
  });

  it("double start is a no-op returning the existing session", () => {
    const clock = new FakeClock();
    const target = new FakeTarget();
    const transport = new FakeTransport();
    const messages: string[] = [];
    const env = { ...fakeEnv(clock, target, transport), log: (m: string) => messages.push(m) };
    const first = startCapture({ sessionId: "s", pageId: "pX", endpoint: "e", env });
    const second = startCapture({ sessionId: "s", pageId: "pX", endpoint: "e", env });
    expect(second).toBe(first);
    expect(messages.some((m) => m.includes("already active"))).toBe(true);
    stopCapture("pX");
  });

  it("a restarted page gets a strictly larger load epoch", async () => {
    const clock = new FakeClock();
    const target = new FakeTarget();
    const transport = new FakeTransport();
    const env = fakeEnv(clock, target, transport);
    const a = new CaptureSession({ sessionId: "s", pageId: "p", endpoint: "e", env });
    a.stop();
    await clock.tick(500); // reload takes time
    const b = new CaptureSession({ sessionId: "s", pageId: "p", endpoint: "e", env });
    expect(b.loadEpoch).toBeGreaterThan(a.loadEpoch);
  });
});

describe("flush schedule", () => {
  it("25 s of activity yields 3 batches including the final flush", async () => {
    const { clock, target, transport, session } = setup();
    for (let i = 0; i < 25; i++) {
      await move(clock, target, 1000, i, i); // one move per second
    }
    await session.finalFlush();
    const lines = transport.lines();
    expect(lines.length).toBe(3); // 10 s, 20 s, final
    const events = lines.flatMap((l) => parseBatchLine(l).events);
    expect(events.length).toBe(25);
  });

  it("first flush with no movement is an empty heartbeat", async () => {
    const { clock, transport } = setup();
    await clock.tick(10_000);
    expect(transport.lines().length).toBe(1);
    expect(parseBatchLine(transport.lines()[0]).events).toEqual([]);
  });

  it("batches never overlap and reconstruct the full stream", async () => {
    const { clock, target, transport, session } = setup();
    const sent: Array<[number, number, number]> = [];
    for (let i = 0; i < 40; i++) {
      await move(clock, target, 700, i, 40 - i);
      sent.push([clock.now() - session.loadEpoch, i, 40 - i]);
    }
    await session.finalFlush();
    const batches = transport.lines().map(parseBatchLine);
    const all = batches.flatMap((b) => b.events);
    expect(all).toEqual(sent);
    for (let i = 1; i < all.length; i++) {
      expect(all[i][0]).toBeGreaterThan(all[i - 1][0]);
    }
    // batch boundaries partition time
    for (let i = 1; i < batches.length; i++) {
      const prev = batches[i - 1].events;
      const next = batches[i].events;
      if (prev.length && next.length) {
        expect(next[0][0]).toBeGreaterThan(prev[prev.length - 1][0]);
      }
    }
  });
});

describe("failure handling", () => {
  it("a failed interval retains events for the next flush", async () => {
    const { clock, target, transport } = setup();
    transport.failNext = 1;
    await move(clock, target, 500, 1, 1);
    await clock.tick(9_500); // first flush fails
    expect(transport.lines().length).toBe(0);
    await move(clock, target, 500, 2, 2);
    await clock.tick(9_500); // second flush carries both batches
    const lines = transport.lines();
    expect(lines.length).toBe(2);
    const events = lines.flatMap((l) => parseBatchLine(l).events);
    expect(events.map((e) => e[1])).toEqual([1, 2]);
  });

  it("drops oldest batches past the cap and counts them", async () => {
    const { clock, target, transport, session } = setup({ maxBufferedBatches: 2 });
    transport.failNext = 4;
    for (let i = 0; i < 4; i++) {
      await move(clock, target, 500, i, i);
      await clock.tick(9_500);
    }
    expect(session.droppedBatches).toBeGreaterThan(0);
    expect(session.pendingBatchCount).toBeLessThanOrEqual(2);
    await session.flush();
    expect(transport.lines().length).toBeLessThanOrEqual(3);
  });

  it("final flush prefers the beacon and falls back to transport", async () => {
    const clock = new FakeClock();
    const target = new FakeTarget();
    const transport = new FakeTransport();
    const beaconBodies: string[] = [];
    const env = {
      ...fakeEnv(clock, target, transport),
      beacon: (body: string) => {
        beaconBodies.push(body);
        return true;
      },
    };
    const session = new CaptureSession({ sessionId: "s", pageId: "pb", endpoint: "e", env });
    await move(clock, target, 100, 3, 4);
    target.dispatch("pagehide", {});
    expect(beaconBodies.length).toBe(1);
    expect(transport.lines().length).toBe(0);
    session.stop();
  });
});
