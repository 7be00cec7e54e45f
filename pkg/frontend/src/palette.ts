// Layer palettes. Occupancy mirrors the server grayscale export exactly
// (free 255, unknown 127, occupied 0) so pixel comparisons against
// server-emitted images only differ by the colormap applied on top.

export const UNKNOWN = -1;
export const FREE = 0;
export const OCCUPIED = 1;

export function occupancyGray(cell: number): number {
  if (cell === FREE) return 255;
  if (cell === OCCUPIED) return 0;
  return 127;
}

export function occupancyRGBA(cell: number): [number, number, number, number] {
  const g = occupancyGray(cell);
  if (cell === UNKNOWN) return [g, g, g + 8, 255]; // faint blue cast for unknown
  return [g, g, g, 255];
}

/** Diverging palette for signed distances: red inside obstacles, white at
 * the boundary, blue fading with clearance. */
export function esdfRGBA(d: number, dMax: number): [number, number, number, number] {
  if (!isFinite(d)) return [220, 220, 220, 255];
  if (d < 0) {
    const t = Math.min(-d / Math.max(dMax * 0.25, 1e-6), 1);
    return [255, Math.round(200 * (1 - t)), Math.round(200 * (1 - t)), 255];
  }
  const t = Math.min(d / Math.max(dMax, 1e-6), 1);
  return [Math.round(255 - 160 * t), Math.round(255 - 90 * t), 255, 255];
}
