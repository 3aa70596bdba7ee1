/** Rectangle math shared by the annotator and edit canvas.
 *
 * All rectangles are integer, inclusive-exclusive boxes in source-image
 * pixel space, regardless of the zoom the view is rendered at.
 */

export interface Rect {
  xMin: number;
  yMin: number;
  xMax: number;
  yMax: number;
}

export interface RoiBoxJson {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export function rectWidth(r: Rect): number {
  return r.xMax - r.xMin;
}

export function rectHeight(r: Rect): number {
  return r.yMax - r.yMin;
}

export function rectValid(r: Rect): boolean {
  return r.xMax > r.xMin && r.yMax > r.yMin && r.xMin >= 0 && r.yMin >= 0;
}

export function rectsOverlap(a: Rect, b: Rect): boolean {
  return a.xMin < b.xMax && b.xMin < a.xMax && a.yMin < b.yMax && b.yMin < a.yMax;
}

/** Map a view-space point onto integer source pixels under zoom and pan. */
export function viewToSource(
  viewX: number,
  viewY: number,
  zoom: number,
  panX = 0,
  panY = 0,
): { x: number; y: number } {
  if (zoom <= 0) throw new Error(`zoom must be positive, got ${zoom}`);
  return {
    x: Math.floor((viewX - panX) / zoom),
    y: Math.floor((viewY - panY) / zoom),
  };
}

/** Normalize a drag gesture (any corner order) into a valid source rect. */
export function dragToRect(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): Rect {
  const xMin = Math.min(x0, x1);
  const xMax = Math.max(x0, x1) + 1; // the cell under the cursor is included
  const yMin = Math.min(y0, y1);
  const yMax = Math.max(y0, y1) + 1;
  return { xMin, yMin, xMax, yMax };
}

export function clampRect(r: Rect, width: number, height: number): Rect {
  return {
    xMin: Math.max(0, Math.min(r.xMin, width - 1)),
    yMin: Math.max(0, Math.min(r.yMin, height - 1)),
    xMax: Math.max(1, Math.min(r.xMax, width)),
    yMax: Math.max(1, Math.min(r.yMax, height)),
  };
}

export function rectToJson(r: Rect): RoiBoxJson {
  return { x_min: r.xMin, y_min: r.yMin, x_max: r.xMax, y_max: r.yMax };
}

export function jsonToRect(b: RoiBoxJson): Rect {
  return { xMin: b.x_min, yMin: b.y_min, xMax: b.x_max, yMax: b.y_max };
}
