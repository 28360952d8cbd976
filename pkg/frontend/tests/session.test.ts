import { beforeEach, describe, expect, it } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { AnnotationSession } from "../src/session.js";
import { StubServer } from "./stub_server.js";

function makeSession(stub: StubServer) {
  const errors: string[] = [];
  const api = new AnnotationApi("", stub.fetch);
  const session = new AnnotationSession(api, { onError: (m) => errors.push(m) });
  return { session, errors };
}

async function openSession(session: AnnotationSession): Promise<string> {
  await session.open(new Blob([new Uint8Array([1, 2, 3])], { type: "image/png" }));
  const id = session.snapshot.id;
  expect(id).not.toBeNull();
  return id as string;
}

describe("annotation session against the stub server", () => {
  let stub: StubServer;

  beforeEach(() => {
    stub = new StubServer(24, 32);
  });

  it("mirrors the server click list after add, undo and reset", async () => {
    const { session } = makeSession(stub);
    const id = await openSession(session);

    await session.addClick(5, 6, "positive");
    await session.addClick(10, 12, "negative");
    await session.addClick(3, 3, "positive");
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
    expect(session.snapshot.clicks).toHaveLength(3);

    await session.undo();
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
    expect(session.snapshot.clicks).toHaveLength(2);

    await session.reset();
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
    expect(session.snapshot.clicks).toHaveLength(0);

    // undo on empty is a flagged no-op on both sides
    await session.undo();
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
  });

  it("drops no state on a rejected click and reports the error", async () => {
    const { session, errors } = makeSession(stub);
    const id = await openSession(session);
    await session.addClick(5, 6, "positive");
    const before = session.snapshot;

    await session.addClick(999, 0, "positive");
    expect(errors).toHaveLength(1);
    expect(errors[0]).toContain("422");
    const after = session.snapshot;
    expect(after.clicks).toEqual(before.clicks);
    expect(Array.from(after.mask!)).toEqual(Array.from(before.mask!));
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
  });

  it("suppresses duplicates exactly like the server", async () => {
    const { session } = makeSession(stub);
    const id = await openSession(session);
    await session.addClick(5, 6, "positive");
    await session.addClick(5, 6, "positive");
    expect(session.snapshot.clicks).toHaveLength(1);
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
  });

  it("renders exactly the returned RLE mask", async () => {
    const { session } = makeSession(stub);
    const id = await openSession(session);
    await session.addClick(8, 8, "positive");
    await session.addClick(8, 11, "negative");
    expect(Array.from(session.snapshot.mask!)).toEqual(
      Array.from(stub.expectedMask(id)));
  });

  it("undo swaps in the server's returned mask for the prefix", async () => {
    const { session } = makeSession(stub);
    const id = await openSession(session);
    await session.addClick(8, 8, "positive");
    const maskAfterOne = Array.from(session.snapshot.mask!);
    await session.addClick(15, 20, "positive");
    await session.undo();
    expect(Array.from(session.snapshot.mask!)).toEqual(maskAfterOne);
    expect(Array.from(session.snapshot.mask!)).toEqual(Array.from(stub.expectedMask(id)));
  });

  it("keeps one request in flight and preserves click order", async () => {
    stub.delayMs = 5;
    const { session } = makeSession(stub);
    const id = await openSession(session);

    void session.addClick(1, 1, "positive");
    void session.addClick(2, 2, "negative");
    void session.addClick(3, 3, "positive");
    await session.idle();

    expect(stub.maxInFlight).toBe(1);
    expect(stub.clickLog(id).map((c) => [c.row, c.col, c.polarity])).toEqual([
      [1, 1, "positive"],
      [2, 2, "negative"],
      [3, 3, "positive"],
    ]);
    expect(session.snapshot.clicks).toEqual(stub.clickLog(id));
  });

  it("maps canvas positions through the display scale before sending", async () => {
    const { session } = makeSession(stub);
    const id = await openSession(session);
    await session.placeClickAt({ x: 40, y: 20 }, "positive", 2);
    const [click] = stub.clickLog(id);
    expect(click.row).toBe(Math.round(20 / 2 - 0.5));
    expect(click.col).toBe(Math.round(40 / 2 - 0.5));
    // out-of-canvas positions clamp to the image border
    await session.placeClickAt({ x: 1000, y: 1000 }, "negative", 2);
    const clamped = stub.clickLog(id)[1];
    expect(clamped.row).toBe(23);
    expect(clamped.col).toBe(31);
  });

  it("tracks latency and overlay opacity in the UI state", async () => {
    const { session } = makeSession(stub);
    await openSession(session);
    await session.addClick(4, 4, "positive");
    expect(session.snapshot.lastLatencyMs).not.toBeNull();
    session.setOverlayOpacity(0.8);
    expect(session.snapshot.overlayOpacity).toBeCloseTo(0.8);
    session.setOverlayOpacity(7);
    expect(session.snapshot.overlayOpacity).toBe(1);
  });
});
