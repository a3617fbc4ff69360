/** Binary frame payload: 16-byte header, then N*16 bytes of float32
 * x/y/z/intensity and N*4 bytes of packed uint32 labels (low 16 bits
 * semantic class, high 16 bits instance id), all little endian. */

export const PAYLOAD_MAGIC = "LPSF";
export const PAYLOAD_VERSION = 1;
export const HEADER_BYTES = 16;
export const BYTES_PER_POINT = 20;

export class PayloadError extends Error {}

/** Unsupported version: the client is stale and must reload. */
export class PayloadVersionError extends PayloadError {
  constructor(readonly got: number) {
    super(`payload version ${got}, expected ${PAYLOAD_VERSION}; reload`);
  }
}

export interface FramePayload {
  frame: number;
  count: number;
  /** x, y, z, intensity interleaved; 4 floats per point. */
  points: Float32Array;
  semantic: Uint16Array;
  instance: Uint16Array;
}

export function parseFramePayload(buffer: ArrayBuffer): FramePayload {
  if (buffer.byteLength < HEADER_BYTES) {
    throw new PayloadError(`payload of ${buffer.byteLength} bytes has no header`);
  }
  const view = new DataView(buffer);
  const magic = String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3),
  );
  if (magic !== PAYLOAD_MAGIC) {
    throw new PayloadError(`bad payload magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint16(4, true);
  if (version !== PAYLOAD_VERSION) {
    throw new PayloadVersionError(version);
  }
  const frame = view.getUint32(8, true);
  const count = view.getUint32(12, true);
  const expected = HEADER_BYTES + BYTES_PER_POINT * count;
  if (buffer.byteLength !== expected) {
    throw new PayloadError(
      `payload of ${buffer.byteLength} bytes, header says ${expected}`,
    );
  }
  const points = new Float32Array(count * 4);
  const semantic = new Uint16Array(count);
  const instance = new Uint16Array(count);
  const floatBase = HEADER_BYTES;
  const labelBase = HEADER_BYTES + 16 * count;
  for (let i = 0; i < count * 4; i++) {
    points[i] = view.getFloat32(floatBase + 4 * i, true);
  }
  for (let i = 0; i < count; i++) {
    const packed = view.getUint32(labelBase + 4 * i, true);
    semantic[i] = packed & 0xffff;
    instance[i] = packed >>> 16;
  }
  return { frame, count, points, semantic, instance };
}

/** Inverse of parseFramePayload; used by tests and offline tooling. */
export function buildFramePayload(payload: FramePayload): ArrayBuffer {
  const { frame, count, points, semantic, instance } = payload;
  if (points.length !== count * 4) {
    throw new PayloadError("points length must be 4 * count");
  }
  if (semantic.length !== count || instance.length !== count) {
    throw new PayloadError("label arrays must have one entry per point");
  }
  const buffer = new ArrayBuffer(HEADER_BYTES + BYTES_PER_POINT * count);
  const view = new DataView(buffer);
  for (let i = 0; i < 4; i++) view.setUint8(i, PAYLOAD_MAGIC.charCodeAt(i));
  view.setUint16(4, PAYLOAD_VERSION, true);
  view.setUint16(6, 0, true);
  view.setUint32(8, frame, true);
  view.setUint32(12, count, true);
  for (let i = 0; i < count * 4; i++) {
    view.setFloat32(HEADER_BYTES + 4 * i, points[i]!, true);
  }
  const labelBase = HEADER_BYTES + 16 * count;
  for (let i = 0; i < count; i++) {
    view.setUint32(labelBase + 4 * i, (instance[i]! << 16 | semantic[i]!) >>> 0, true);
  }
  return buffer;
}
