/** Drag-to-draw ROI rectangles over a zoomable image view.
 *
 * Coordinates are tracked in integer source pixels from the first press, so
 * the serialized boxes are exactly the integers the overlay displays, at any
 * zoom.  Overlapping boxes are rejected, mirroring the server's contract.
 */

import {
  Rect,
  RoiBoxJson,
  clampRect,
  dragToRect,
  jsonToRect,
  rectToJson,
  rectValid,
  rectsOverlap,
  viewToSource,
} from "./geometry.js";

export type RejectionReason = "overlap" | "degenerate" | null;

export class RoiAnnotator {
  readonly width: number;
  readonly height: number;
  zoom = 1;
  panX = 0;
  panY = 0;
  lastRejection: RejectionReason = null;

  private rects: Rect[] = [];
  private drag: { x: number; y: number } | null = null;
  private cursor: { x: number; y: number } | null = null;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
  }

  boxes(): Rect[] {
    return this.rects.map((r) => ({ ...r }));
  }

  beginDrag(viewX: number, viewY: number): void {
    this.drag = viewToSource(viewX, viewY, this.zoom, this.panX, this.panY);
    this.cursor = this.drag;
  }

  dragTo(viewX: number, viewY: number): void {
    if (!this.drag) return;
    this.cursor = viewToSource(viewX, viewY, this.zoom, this.panX, this.panY);
  }

  /** Current in-progress rectangle (for the live overlay), if any. */
  pending(): Rect | null {
    if (!this.drag || !this.cursor) return null;
    return clampRect(
      dragToRect(this.drag.x, this.drag.y, this.cursor.x, this.cursor.y),
      this.width,
      this.height,
    );
  }

  endDrag(): Rect | null {
    const rect = this.pending();
    this.drag = null;
    this.cursor = null;
    if (!rect || !rectValid(rect)) {
      this.lastRejection = "degenerate";
      return null;
    }
    if (this.rects.some((existing) => rectsOverlap(existing, rect))) {
      this.lastRejection = "overlap";
      return null;
    }
    this.lastRejection = null;
    this.rects.push(rect);
    return { ...rect };
  }

  remove(index: number): void {
    this.rects.splice(index, 1);
  }

  clear(): void {
    this.rects = [];
  }

  toJson(): RoiBoxJson[] {
    return this.rects.map(rectToJson);
  }

  /** Restore overlays from the server's stored boxes (page refresh). */
  loadJson(boxes: RoiBoxJson[]): void {
    const rects = boxes.map(jsonToRect);
    for (let i = 0; i < rects.length; i++) {
      for (let j = i + 1; j < rects.length; j++) {
        if (rectsOverlap(rects[i], rects[j])) {
          throw new Error("stored boxes overlap");
        }
      }
    }
    this.rects = rects;
  }
}
