// Top-down view transform: world meters <-> canvas pixels, with pan/zoom.
// +x right, +y up on screen (canvas y is flipped).

export interface ViewState {
  /** world point at the canvas center, meters */
  centerX: number;
  centerY: number;
  /** pixels per meter */
  scale: number;
  canvasW: number;
  canvasH: number;
}

export function defaultView(canvasW: number, canvasH: number, bounds?: [number, number, number, number]): ViewState {
  const view: ViewState = { centerX: 0, centerY: 0, scale: 30, canvasW, canvasH };
  if (bounds) {
    view.centerX = (bounds[0] + bounds[1]) / 2;
    view.centerY = (bounds[2] + bounds[3]) / 2;
    const spanX = bounds[1] - bounds[0];
    const spanY = bounds[3] - bounds[2];
    view.scale = 0.92 * Math.min(canvasW / spanX, canvasH / spanY);
  }
  return view;
}

export function worldToScreen(view: ViewState, wx: number, wy: number): [number, number] {
  const sx = view.canvasW / 2 + (wx - view.centerX) * view.scale;
  const sy = view.canvasH / 2 - (wy - view.centerY) * view.scale;
  return [sx, sy];
}

export function screenToWorld(view: ViewState, sx: number, sy: number): [number, number] {
  const wx = view.centerX + (sx - view.canvasW / 2) / view.scale;
  const wy = view.centerY - (sy - view.canvasH / 2) / view.scale;
  return [wx, wy];
}

export function pan(view: ViewState, dxPx: number, dyPx: number): ViewState {
  return {
    ...view,
    centerX: view.centerX - dxPx / view.scale,
    centerY: view.centerY + dyPx / view.scale,
  };
}

/** zoom about a screen anchor so the world point under the cursor stays put */
export function zoom(view: ViewState, factor: number, anchorX: number, anchorY: number): ViewState {
  const clamped = Math.min(Math.max(view.scale * factor, 2), 2000);
  const [wx, wy] = screenToWorld(view, anchorX, anchorY);
  const out = { ...view, scale: clamped };
  // solve for the center that maps (wx, wy) back to the anchor pixel
  out.centerX = wx - (anchorX - view.canvasW / 2) / clamped;
  out.centerY = wy + (anchorY - view.canvasH / 2) / clamped;
  return out;
}
