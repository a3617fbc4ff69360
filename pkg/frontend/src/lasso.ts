/** Lasso hit-testing: even-odd (crossing number) point-in-polygon over
 * the projected screen positions of the current frame. */

import { ScreenPoints } from "./viewstate.js";

export type Polygon = ReadonlyArray<readonly [number, number]>;

/** Even-odd rule; points exactly on an edge count as inside. */
export function pointInPolygon(px: number, py: number, polygon: Polygon): boolean {
  const n = polygon.length;
  if (n < 3) return false;
  let inside = false;
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const [xi, yi] = polygon[i]!;
    const [xj, yj] = polygon[j]!;
    // on-edge check keeps boundary points selectable
    const cross = (px - xi) * (yj - yi) - (py - yi) * (xj - xi);
    if (
      cross === 0 &&
      px >= Math.min(xi, xj) && px <= Math.max(xi, xj) &&
      py >= Math.min(yi, yj) && py <= Math.max(yi, yj)
    ) {
      return true;
    }
    if (yi > py !== yj > py) {
      const xAt = xi + ((py - yi) / (yj - yi)) * (xj - xi);
      if (px < xAt) inside = !inside;
    }
  }
  return inside;
}

/** Indices (into the projected arrays) of points inside the lasso. A
 * bounding-box prefilter skips the polygon test for most points. */
export function lassoSelect(screen: ScreenPoints, polygon: Polygon): number[] {
  if (polygon.length < 3) return [];
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [x, y] of polygon) {
    minX = Math.min(minX, x);
    maxX = Math.max(maxX, x);
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  const out: number[] = [];
  for (let i = 0; i < screen.x.length; i++) {
    const x = screen.x[i]!;
    const y = screen.y[i]!;
    if (!Number.isFinite(x) || !Number.isFinite(y)) continue;
    if (x < minX || x > maxX || y < minY || y > maxY) continue;
    if (pointInPolygon(x, y, polygon)) out.push(i);
  }
  return out;
}
