/** Colors. Presegmentation instances use a dark golden-angle wheel; user
 * classes use a light one, so the two palettes stay far apart in RGB and
 * an assigned segment is visibly different from an automatic one. */

export type RGB = readonly [number, number, number];

const GOLDEN_ANGLE = 137.50776405003785;

export const UNLABELED_COLOR: RGB = [0.45, 0.45, 0.45];

export function hslToRgb(h: number, s: number, l: number): RGB {
  const hue = ((h % 360) + 360) % 360;
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const x = c * (1 - Math.abs(((hue / 60) % 2) - 1));
  const m = l - c / 2;
  let rgb: [number, number, number];
  if (hue < 60) rgb = [c, x, 0];
  else if (hue < 120) rgb = [x, c, 0];
  else if (hue < 180) rgb = [0, c, x];
  else if (hue < 240) rgb = [0, x, c];
  else if (hue < 300) rgb = [x, 0, c];
  else rgb = [c, 0, x];
  return [rgb[0] + m, rgb[1] + m, rgb[2] + m];
}

/** Display color of an unassigned presegmentation instance. */
export function presegColor(instanceId: number): RGB {
  if (instanceId === 0) return UNLABELED_COLOR;
  return hslToRgb(instanceId * GOLDEN_ANGLE, 0.7, 0.42);
}

/** Display color of the k-th user-defined class. */
export function classColor(index: number): RGB {
  return hslToRgb(60 + index * GOLDEN_ANGLE, 0.95, 0.85);
}

export function rgbDistance(a: RGB, b: RGB): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}
