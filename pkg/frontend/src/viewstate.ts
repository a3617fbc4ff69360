/** Client view model: what is loaded, how points are colored, what is
 * selected, and the id-buffer that makes picking O(1). */

import { FramePayload } from "./payload.js";
import { RGB, UNLABELED_COLOR, classColor, presegColor } from "./palette.js";

export type Vec3 = readonly [number, number, number];

export interface CameraPose {
  position: Vec3;
  target: Vec3;
  up: Vec3;
}

export interface ClassDef {
  id: number;
  name: string;
  /** index into the user class palette, not a raw color */
  colorIndex: number;
}

export type Selection =
  | { kind: "none" }
  | { kind: "segment"; id: number }
  | { kind: "lasso"; frame: number; indices: number[] };

export interface ViewState {
  sequence: string | null;
  frame: number;
  camera: CameraPose;
  classes: ClassDef[];
  hiddenClasses: Set<number>;
  selection: Selection;
}

export function createViewState(): ViewState {
  return {
    sequence: null,
    frame: 0,
    camera: { position: [0, -20, 20], target: [0, 0, 0], up: [0, 0, 1] },
    classes: [],
    hiddenClasses: new Set(),
    selection: { kind: "none" },
  };
}

/** Instance color before assignment, class color after. */
export function pointColor(state: ViewState, semantic: number, instance: number): RGB {
  const cls = state.classes.find((c) => c.id === semantic);
  if (cls !== undefined) return classColor(cls.colorIndex);
  if (instance !== 0) return presegColor(instance);
  return UNLABELED_COLOR;
}

export interface RenderList {
  /** one xyz triple per rendered point */
  positions: Float32Array;
  colors: Float32Array;
  /** per rendered point, for the id-buffer pass */
  instanceIds: Uint32Array;
  /** rendered index -> index in the source payload */
  sourceIndex: Uint32Array;
}

/** Instanced-point buffers for the current frame, visibility applied. */
export function buildRenderList(state: ViewState, payload: FramePayload): RenderList {
  const keep: number[] = [];
  for (let i = 0; i < payload.count; i++) {
    if (!state.hiddenClasses.has(payload.semantic[i]!)) keep.push(i);
  }
  const positions = new Float32Array(keep.length * 3);
  const colors = new Float32Array(keep.length * 3);
  const instanceIds = new Uint32Array(keep.length);
  const sourceIndex = new Uint32Array(keep.length);
  keep.forEach((src, out) => {
    positions[out * 3] = payload.points[src * 4]!;
    positions[out * 3 + 1] = payload.points[src * 4 + 1]!;
    positions[out * 3 + 2] = payload.points[src * 4 + 2]!;
    const rgb = pointColor(state, payload.semantic[src]!, payload.instance[src]!);
    colors[out * 3] = rgb[0];
    colors[out * 3 + 1] = rgb[1];
    colors[out * 3 + 2] = rgb[2];
    instanceIds[out] = payload.instance[src]!;
    sourceIndex[out] = src;
  });
  return { positions, colors, instanceIds, sourceIndex };
}

export interface ScreenPoints {
  /** raster x, NaN when behind the camera */
  x: Float32Array;
  y: Float32Array;
  depth: Float32Array;
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalize(a: Vec3): Vec3 {
  const n = Math.hypot(a[0], a[1], a[2]);
  return [a[0] / n, a[1] / n, a[2] / n];
}

/** Pinhole projection of xyz triples through a look-at camera. */
export function projectPoints(
  positions: Float32Array,
  camera: CameraPose,
  raster: { width: number; height: number; focal: number },
): ScreenPoints {
  const n = positions.length / 3;
  const forward = normalize(sub(camera.target, camera.position));
  const right = normalize(cross(forward, camera.up));
  const camUp = cross(right, forward);
  const cx = raster.width / 2;
  const cy = raster.height / 2;
  const x = new Float32Array(n);
  const y = new Float32Array(n);
  const depth = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const d: Vec3 = [
      positions[i * 3]! - camera.position[0],
      positions[i * 3 + 1]! - camera.position[1],
      positions[i * 3 + 2]! - camera.position[2],
    ];
    const z = dot(d, forward);
    depth[i] = z;
    if (z <= 1e-9) {
      x[i] = NaN;
      y[i] = NaN;
      continue;
    }
    x[i] = cx + (raster.focal * dot(d, right)) / z;
    y[i] = cy - (raster.focal * dot(d, camUp)) / z;
  }
  return { x, y, depth };
}

export interface IdBuffer {
  width: number;
  height: number;
  /** instance id per pixel, -1 where nothing rendered */
  ids: Int32Array;
  depth: Float32Array;
}

/** Nearest-point-wins id pass over the raster. */
export function renderIdBuffer(
  screen: ScreenPoints,
  instanceIds: Uint32Array,
  width: number,
  height: number,
): IdBuffer {
  const ids = new Int32Array(width * height).fill(-1);
  const depth = new Float32Array(width * height).fill(Infinity);
  for (let i = 0; i < instanceIds.length; i++) {
    const sx = Math.floor(screen.x[i]!);
    const sy = Math.floor(screen.y[i]!);
    if (!Number.isFinite(sx) || !Number.isFinite(sy)) continue;
    if (sx < 0 || sx >= width || sy < 0 || sy >= height) continue;
    const at = sy * width + sx;
    if (screen.depth[i]! < depth[at]!) {
      depth[at] = screen.depth[i]!;
      ids[at] = instanceIds[i]!;
    }
  }
  return { width, height, ids, depth };
}

/** O(1) pick: read the id under the cursor. */
export function pick(buffer: IdBuffer, x: number, y: number): number | null {
  const sx = Math.floor(x);
  const sy = Math.floor(y);
  if (sx < 0 || sx >= buffer.width || sy < 0 || sy >= buffer.height) return null;
  const id = buffer.ids[sy * buffer.width + sx]!;
  return id < 0 ? null : id;
}
