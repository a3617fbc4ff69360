/** HTTP client for the annotation service. All mutations carry
 * expected_version; a stale version surfaces as ConflictError with the
 * server's journal positions so the caller can reconcile. */

import { FramePayload, parseFramePayload } from "./payload.js";

export interface SequenceInfo {
  name: string;
  frames: number;
  version: number;
}

export interface SegmentRow {
  id: number;
  frames: number[];
  point_counts: number[];
  semantic: number;
}

export interface SegmentTable {
  version: number;
  segments: SegmentRow[];
  keyframes?: number[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(
    status: number,
    message: string,
    readonly expected: number,
    readonly actual: number,
  ) {
    super(status, "journal_conflict", message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseEnvelope(resp: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${resp.status}`;
  let expected = -1;
  let actual = -1;
  try {
    const doc = await resp.json();
    code = doc.error?.code ?? code;
    message = doc.error?.message ?? message;
    expected = doc.error?.expected ?? expected;
    actual = doc.error?.actual ?? actual;
  } catch {
    // non-JSON error body; keep the HTTP status message
  }
  if (code === "journal_conflict") {
    throw new ConflictError(resp.status, message, expected, actual);
  }
  throw new ApiError(resp.status, code, message);
}

export class AnnotatorClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "content-type": "application/json" };
    }
    const resp = await this.fetchImpl(this.base + path, init);
    if (!resp.ok) await raiseEnvelope(resp);
    return (await resp.json()) as T;
  }

  async listSequences(): Promise<SequenceInfo[]> {
    const doc = await this.json<{ sequences: SequenceInfo[] }>("GET", "/sequences");
    return doc.sequences;
  }

  /** Raw payload bytes; kept for bit-exactness checks. */
  async frameBytes(name: string, frame: number): Promise<ArrayBuffer> {
    const resp = await this.fetchImpl(
      `${this.base}/sequences/${encodeURIComponent(name)}/frames/${frame}`,
      { method: "GET" },
    );
    if (!resp.ok) await raiseEnvelope(resp);
    return resp.arrayBuffer();
  }

  async frame(name: string, frame: number): Promise<FramePayload> {
    return parseFramePayload(await this.frameBytes(name, frame));
  }

  async segments(name: string): Promise<SegmentTable> {
    return this.json("GET", `/sequences/${encodeURIComponent(name)}/segments`);
  }

  async assign(
    name: string, segmentId: number, semanticId: number, expectedVersion: number,
  ): Promise<{ version: number }> {
    return this.json("POST", `/sequences/${encodeURIComponent(name)}/assign`, {
      segment_id: segmentId,
      semantic_id: semanticId,
      expected_version: expectedVersion,
    });
  }

  async merge(
    name: string, ids: number[], expectedVersion: number,
  ): Promise<{ version: number; target: number; noop?: boolean }> {
    return this.json("POST", `/sequences/${encodeURIComponent(name)}/merge`, {
      ids,
      expected_version: expectedVersion,
    });
  }

  async split(
    name: string, segmentId: number, frame: number, pointIndices: number[],
    expectedVersion: number,
  ): Promise<{ version: number; new_id: number }> {
    return this.json("POST", `/sequences/${encodeURIComponent(name)}/split`, {
      segment_id: segmentId,
      frame,
      point_indices: pointIndices,
      expected_version: expectedVersion,
    });
  }

  async autoInstance(
    name: string, expectedVersion: number,
  ): Promise<{ version: number; mapping: Record<string, number> }> {
    return this.json(
      "POST", `/sequences/${encodeURIComponent(name)}/auto_instance`,
      { expected_version: expectedVersion },
    );
  }

  async save(name: string): Promise<{ version: number; paths: string[] }> {
    return this.json("POST", `/sequences/${encodeURIComponent(name)}/save`, {});
  }

  async presegment(
    name: string, config: Record<string, unknown>,
  ): Promise<{ job_id: string }> {
    return this.json(
      "POST", `/sequences/${encodeURIComponent(name)}/presegment`, { config },
    );
  }

  async jobProgress(jobId: string): Promise<Record<string, unknown>> {
    return this.json("GET", `/jobs/${encodeURIComponent(jobId)}/progress`);
  }
}
