/** Editing session: one sequence, locally mirrored frames, and a serial
 * mutation queue. Edits apply optimistically to the local mirror, then go
 * to the server in order; the journal is authoritative, so a conflict
 * rolls the optimistic change back (keeping the selection) and a
 * divergent server result overwrites the local prediction. */

import { AnnotatorClient, ConflictError } from "./api.js";
import { FramePayload, PayloadVersionError } from "./payload.js";
import { Selection, ViewState, createViewState } from "./viewstate.js";

export type Notice =
  | { kind: "conflict"; message: string; actualVersion: number }
  | { kind: "noop"; message: string }
  | { kind: "reload"; message: string };

type Snapshot = Map<number, { semantic: Uint16Array; instance: Uint16Array }>;

export class AnnotatorSession {
  readonly state: ViewState;
  version = 0;
  readonly frames = new Map<number, FramePayload>();
  readonly notices: Notice[] = [];
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly client: AnnotatorClient,
    readonly sequence: string,
    private readonly onNotice?: (notice: Notice) => void,
  ) {
    this.state = createViewState();
    this.state.sequence = sequence;
  }

  private notify(notice: Notice): void {
    this.notices.push(notice);
    this.onNotice?.(notice);
  }

  /** Serialize mutations: requests reach the journal in call order. */
  private enqueue<T>(op: () => Promise<T>): Promise<T> {
    const next = this.queue.then(op, op);
    this.queue = next.catch(() => undefined);
    return next;
  }

  async open(): Promise<void> {
    const table = await this.client.segments(this.sequence);
    this.version = table.version;
  }

  async loadFrame(frame: number): Promise<FramePayload> {
    try {
      const payload = await this.client.frame(this.sequence, frame);
      this.frames.set(frame, payload);
      this.state.frame = frame;
      return payload;
    } catch (err) {
      if (err instanceof PayloadVersionError) {
        this.notify({ kind: "reload", message: err.message });
      }
      throw err;
    }
  }

  private snapshot(): Snapshot {
    const snap: Snapshot = new Map();
    for (const [t, payload] of this.frames) {
      snap.set(t, {
        semantic: payload.semantic.slice(),
        instance: payload.instance.slice(),
      });
    }
    return snap;
  }

  private restore(snap: Snapshot): void {
    for (const [t, labels] of snap) {
      const payload = this.frames.get(t);
      if (payload === undefined) continue;
      payload.semantic.set(labels.semantic);
      payload.instance.set(labels.instance);
    }
  }

  private async mutate<T extends { version: number }>(
    applyLocal: () => void,
    send: () => Promise<T>,
    keepSelection: Selection,
  ): Promise<T | null> {
    return this.enqueue(async () => {
      const snap = this.snapshot();
      applyLocal();
      try {
        const result = await send();
        this.version = result.version;
        return result;
      } catch (err) {
        this.restore(snap);
        if (err instanceof ConflictError) {
          this.state.selection = keepSelection;
          this.version = err.actual >= 0 ? err.actual : this.version;
          this.notify({
            kind: "conflict",
            message: err.message,
            actualVersion: this.version,
          });
          return null;
        }
        throw err;
      }
    });
  }

  /** Assign a semantic class to the selected segment, sequence wide. */
  async assignSelected(semanticId: number): Promise<boolean> {
    const selection = this.state.selection;
    if (selection.kind !== "segment") return false;
    const result = await this.mutate(
      () => {
        for (const payload of this.frames.values()) {
          for (let i = 0; i < payload.count; i++) {
            if (payload.instance[i] === selection.id) {
              payload.semantic[i] = semanticId;
            }
          }
        }
      },
      () => this.client.assign(
        this.sequence, selection.id, semanticId, this.version,
      ),
      selection,
    );
    return result !== null;
  }

  /** Merge segments into the smallest id; one distinct id is a no-op. */
  async mergeSegments(ids: number[]): Promise<number | null> {
    const distinct = [...new Set(ids)];
    if (distinct.length < 2) {
      this.notify({
        kind: "noop",
        message: "merge needs at least two distinct segments",
      });
      return null;
    }
    const target = Math.min(...distinct);
    const selection = this.state.selection;
    const result = await this.mutate(
      () => {
        for (const payload of this.frames.values()) {
          for (let i = 0; i < payload.count; i++) {
            if (distinct.includes(payload.instance[i]!)) {
              payload.instance[i] = target;
            }
          }
        }
      },
      () => this.client.merge(this.sequence, distinct, this.version),
      selection,
    );
    if (result === null) return null;
    this.state.selection = { kind: "segment", id: result.target };
    return result.target;
  }

  /** Split lasso-selected points (source indices) out of a segment at the
   * current frame. The server allocates the id; the optimistic guess is
   * fixed up if an unloaded frame held a higher id. */
  async splitSelected(
    segmentId: number, frame: number, pointIndices: number[],
  ): Promise<number | null> {
    if (pointIndices.length === 0) {
      this.notify({ kind: "noop", message: "empty lasso selection" });
      return null;
    }
    let guess = 0;
    for (const payload of this.frames.values()) {
      for (let i = 0; i < payload.count; i++) {
        guess = Math.max(guess, payload.instance[i]!);
      }
    }
    guess += 1;
    const selection = this.state.selection;
    const result = await this.mutate(
      () => this.applySplit(segmentId, frame, pointIndices, guess),
      () => this.client.split(
        this.sequence, segmentId, frame, pointIndices, this.version,
      ),
      selection,
    );
    if (result === null) return null;
    if (result.new_id !== guess) {
      // reconcile the optimistic id with the journaled one
      for (const payload of this.frames.values()) {
        for (let i = 0; i < payload.count; i++) {
          if (payload.instance[i] === guess) payload.instance[i] = result.new_id;
        }
      }
    }
    this.state.selection = { kind: "segment", id: result.new_id };
    return result.new_id;
  }

  private applySplit(
    segmentId: number, frame: number, pointIndices: number[], newId: number,
  ): void {
    const cut = this.frames.get(frame);
    if (cut !== undefined) {
      for (const i of pointIndices) {
        if (cut.instance[i] === segmentId) cut.instance[i] = newId;
      }
    }
    for (const [t, payload] of this.frames) {
      if (t <= frame) continue;
      for (let i = 0; i < payload.count; i++) {
        if (payload.instance[i] === segmentId) payload.instance[i] = newId;
      }
    }
  }

  /** Flush the journal into the base labels; version drops to zero. */
  async save(): Promise<string[]> {
    const result = await this.enqueue(() => this.client.save(this.sequence));
    this.version = result.version;
    return result.paths;
  }
}
