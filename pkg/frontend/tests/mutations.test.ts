/** Optimistic mutations against a scripted in-memory service: journal
 * order, conflict rollback, no-op merges, and the reload prompt. */

import { describe, expect, it } from "vitest";

import { AnnotatorClient } from "../src/api.js";
import { AnnotatorSession } from "../src/mutations.js";
import { FramePayload, buildFramePayload } from "../src/payload.js";

interface FakeOptions {
  version?: number;
  splitId?: number;
  delayFirstMs?: number;
  payloadVersion?: number;
}

/** Minimal stand-in for the annotation service, one sequence, seq name "s". */
function fakeService(options: FakeOptions = {}) {
  const state = { version: options.version ?? 0 };
  const requests: { path: string; body: any }[] = [];
  let first = true;

  const envelope = (status: number, doc: unknown) =>
    new Response(JSON.stringify(doc), {
      status,
      headers: { "content-type": "application/json" },
    });

  const conflict = (expected: number) =>
    envelope(409, {
      error: {
        code: "journal_conflict",
        message: "stale version",
        retry: true,
        expected,
        actual: state.version,
      },
    });

  const fetchImpl = async (url: string, init?: RequestInit) => {
    const path = new URL(url, "http://fake").pathname;
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    requests.push({ path, body });
    if (options.delayFirstMs && first) {
      first = false;
      await new Promise((r) => setTimeout(r, options.delayFirstMs));
    }
    if (path.endsWith("/segments")) {
      return envelope(200, { version: state.version, segments: [] });
    }
    if (/\/frames\/\d+$/.test(path)) {
      const payload: FramePayload = {
        frame: 0,
        count: 1,
        points: Float32Array.from([0, 0, 0, 0]),
        semantic: Uint16Array.from([0]),
        instance: Uint16Array.from([1]),
      };
      const bytes = buildFramePayload(payload);
      if (options.payloadVersion !== undefined) {
        new DataView(bytes).setUint16(4, options.payloadVersion, true);
      }
      return new Response(bytes, {
        status: 200,
        headers: { "content-type": "application/octet-stream" },
      });
    }
    if (path.endsWith("/assign") || path.endsWith("/merge") || path.endsWith("/split")) {
      if (body.expected_version !== state.version) {
        return conflict(body.expected_version);
      }
      state.version += 1;
      if (path.endsWith("/assign")) return envelope(200, { version: state.version });
      if (path.endsWith("/merge")) {
        return envelope(200, {
          version: state.version,
          target: Math.min(...body.ids),
        });
      }
      return envelope(200, {
        version: state.version,
        new_id: options.splitId ?? 42,
      });
    }
    if (path.endsWith("/save")) {
      state.version = 0;
      return envelope(200, { version: 0, paths: ["000000.label"] });
    }
    return envelope(404, { error: { code: "not_found", message: path } });
  };

  return { fetchImpl, requests, state };
}

function localFrame(semantic: number[], instance: number[]): FramePayload {
  return {
    frame: 0,
    count: semantic.length,
    points: new Float32Array(semantic.length * 4),
    semantic: Uint16Array.from(semantic),
    instance: Uint16Array.from(instance),
  };
}

function sessionWith(fake: ReturnType<typeof fakeService>): AnnotatorSession {
  const client = new AnnotatorClient("http://fake", fake.fetchImpl);
  return new AnnotatorSession(client, "s");
}

describe("assign", () => {
  it("applies optimistically and confirms against the journal", async () => {
    const fake = fakeService();
    const session = sessionWith(fake);
    await session.open();
    session.frames.set(0, localFrame([0, 0, 0], [2, 1, 2]));
    session.state.selection = { kind: "segment", id: 2 };

    expect(await session.assignSelected(7)).toBe(true);
    expect([...session.frames.get(0)!.semantic]).toEqual([7, 0, 7]);
    expect(session.version).toBe(1);
    const sent = fake.requests.find((r) => r.path.endsWith("/assign"));
    expect(sent?.body).toEqual({
      segment_id: 2, semantic_id: 7, expected_version: 0,
    });
  });

  it("rolls back on conflict, keeps the selection, and notifies", async () => {
    const fake = fakeService({ version: 5 });
    const session = sessionWith(fake);
    // session believes version 0: the server moved on to 5
    session.frames.set(0, localFrame([0, 0], [2, 2]));
    session.state.selection = { kind: "segment", id: 2 };

    expect(await session.assignSelected(7)).toBe(false);
    expect([...session.frames.get(0)!.semantic]).toEqual([0, 0]);
    expect(session.state.selection).toEqual({ kind: "segment", id: 2 });
    expect(session.notices).toEqual([
      expect.objectContaining({ kind: "conflict", actualVersion: 5 }),
    ]);
    expect(session.version).toBe(5);
  });
});

describe("merge", () => {
  it("treats a single selected segment as a notified no-op", async () => {
    const fake = fakeService();
    const session = sessionWith(fake);
    expect(await session.mergeSegments([3, 3])).toBeNull();
    expect(session.notices[0]).toMatchObject({ kind: "noop" });
    expect(fake.requests).toHaveLength(0);
  });

  it("relabels to the smallest id and selects the target", async () => {
    const fake = fakeService();
    const session = sessionWith(fake);
    session.frames.set(0, localFrame([0, 0, 0], [5, 3, 9]));
    expect(await session.mergeSegments([5, 9, 3])).toBe(3);
    expect([...session.frames.get(0)!.instance]).toEqual([3, 3, 3]);
    expect(session.state.selection).toEqual({ kind: "segment", id: 3 });
  });
});

describe("split", () => {
  it("moves the lasso points now and the later frames wholesale", async () => {
    const fake = fakeService({ splitId: 42 });
    const session = sessionWith(fake);
    session.frames.set(0, localFrame([0, 0, 0, 0], [2, 2, 2, 1]));
    session.frames.set(1, localFrame([0, 0], [2, 2]));

    expect(await session.splitSelected(2, 0, [0, 2])).toBe(42);
    // optimistic guess was 3 (max loaded id 2 + 1); reconciled to 42
    expect([...session.frames.get(0)!.instance]).toEqual([42, 2, 42, 1]);
    expect([...session.frames.get(1)!.instance]).toEqual([42, 42]);
    expect(session.state.selection).toEqual({ kind: "segment", id: 42 });
  });

  it("refuses an empty selection without a request", async () => {
    const fake = fakeService();
    const session = sessionWith(fake);
    expect(await session.splitSelected(2, 0, [])).toBeNull();
    expect(session.notices[0]).toMatchObject({ kind: "noop" });
    expect(fake.requests).toHaveLength(0);
  });
});

describe("queueing", () => {
  it("sends mutations in call order even when the first is slow", async () => {
    const fake = fakeService({ delayFirstMs: 30 });
    const session = sessionWith(fake);
    session.frames.set(0, localFrame([0, 0], [1, 2]));
    session.state.selection = { kind: "segment", id: 1 };
    const a = session.assignSelected(7);
    session.state.selection = { kind: "segment", id: 2 };
    const b = session.assignSelected(8);
    expect(await Promise.all([a, b])).toEqual([true, true]);
    const bodies = fake.requests.map((r) => r.body.segment_id);
    expect(bodies).toEqual([1, 2]);
    // both landed: the journal saw them in order with fresh versions
    expect(session.version).toBe(2);
    expect([...session.frames.get(0)!.semantic]).toEqual([7, 8]);
  });
});

describe("loadFrame", () => {
  it("prompts a reload when the payload version moved", async () => {
    const fake = fakeService({ payloadVersion: 2 });
    const session = sessionWith(fake);
    await expect(session.loadFrame(0)).rejects.toThrow(/reload/);
    expect(session.notices[0]).toMatchObject({ kind: "reload" });
  });

  it("stores the parsed frame on success", async () => {
    const fake = fakeService();
    const session = sessionWith(fake);
    const payload = await session.loadFrame(0);
    expect(payload.count).toBe(1);
    expect(session.frames.get(0)).toBe(payload);
  });
});
