/** Binary payload parser against hand-built bytes and a golden fixture
 * produced by the service implementation. */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  BYTES_PER_POINT,
  FramePayload,
  HEADER_BYTES,
  PayloadError,
  PayloadVersionError,
  buildFramePayload,
  parseFramePayload,
} from "../src/payload.js";

function fixture(name: string): ArrayBuffer {
  const path = fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));
  const buf = readFileSync(path);
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

function makePayload(count: number, seed: number): FramePayload {
  // small deterministic LCG keeps the test hermetic
  let s = seed >>> 0;
  const next = () => {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
  const points = new Float32Array(count * 4);
  const semantic = new Uint16Array(count);
  const instance = new Uint16Array(count);
  for (let i = 0; i < count * 4; i++) points[i] = Math.fround(next() * 60 - 30);
  for (let i = 0; i < count; i++) {
    semantic[i] = Math.floor(next() * 65536);
    instance[i] = Math.floor(next() * 65536);
  }
  return { frame: seed % 1000, count, points, semantic, instance };
}

describe("parseFramePayload", () => {
  it("round-trips random payloads through build", () => {
    for (const [count, seed] of [[0, 1], [1, 2], [33, 3], [500, 4]] as const) {
      const want = makePayload(count, seed);
      const bytes = buildFramePayload(want);
      expect(bytes.byteLength).toBe(HEADER_BYTES + BYTES_PER_POINT * count);
      const got = parseFramePayload(bytes);
      expect(got.frame).toBe(want.frame);
      expect(got.count).toBe(count);
      expect([...got.points]).toEqual([...want.points]);
      expect([...got.semantic]).toEqual([...want.semantic]);
      expect([...got.instance]).toEqual([...want.instance]);
    }
  });

  it("parses the payload recorded from the service", () => {
    const got = parseFramePayload(fixture("frame7.bin"));
    const want = JSON.parse(
      new TextDecoder().decode(new Uint8Array(fixture("frame7.json"))),
    );
    expect(got.frame).toBe(want.frame);
    expect(got.count).toBe(want.count);
    expect([...got.semantic]).toEqual(want.semantic);
    expect([...got.instance]).toEqual(want.instance);
    for (let i = 0; i < got.count; i++) {
      for (let k = 0; k < 4; k++) {
        expect(got.points[i * 4 + k]).toBeCloseTo(want.points[i][k], 5);
      }
    }
  });

  it("rebuilds the service payload byte-identically", () => {
    const bytes = fixture("frame7.bin");
    const rebuilt = buildFramePayload(parseFramePayload(bytes));
    expect(new Uint8Array(rebuilt)).toEqual(new Uint8Array(bytes));
  });

  it("rejects malformed payloads", () => {
    const good = buildFramePayload(makePayload(3, 9));
    expect(() => parseFramePayload(good.slice(0, 8))).toThrow(PayloadError);
    expect(() => parseFramePayload(good.slice(0, good.byteLength - 1)))
      .toThrow(PayloadError);

    const badMagic = good.slice(0);
    new DataView(badMagic).setUint8(0, 88);
    expect(() => parseFramePayload(badMagic)).toThrow(/magic/);

    const extra = new Uint8Array(good.byteLength + 1);
    extra.set(new Uint8Array(good));
    expect(() => parseFramePayload(extra.buffer)).toThrow(PayloadError);
  });

  it("flags a version bump as a reload condition", () => {
    const bytes = buildFramePayload(makePayload(2, 5));
    new DataView(bytes).setUint16(4, 2, true);
    let caught: unknown;
    try {
      parseFramePayload(bytes);
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(PayloadVersionError);
    expect((caught as PayloadVersionError).got).toBe(2);
    expect(String(caught)).toMatch(/reload/);
  });
});
