import { describe, expect, it } from "vitest";

import { RoiAnnotator } from "../src/roiAnnotator.js";

function drawBox(
  annotator: RoiAnnotator,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
) {
  annotator.beginDrag(x0, y0);
  annotator.dragTo(x1, y1);
  return annotator.endDrag();
}

describe("RoiAnnotator", () => {
  it("draw then delete leaves an empty list", () => {
    const a = new RoiAnnotator(64, 64);
    expect(drawBox(a, 3, 3, 20, 20)).not.toBeNull();
    expect(a.boxes()).toHaveLength(1);
    a.remove(0);
    expect(a.boxes()).toEqual([]);
    expect(a.toJson()).toEqual([]);
  });

  it("serializes exactly the integers the overlay displays", () => {
    const a = new RoiAnnotator(64, 64);
    const added = drawBox(a, 5, 7, 19, 23);
    expect(added).toEqual({ xMin: 5, yMin: 7, xMax: 20, yMax: 24 });
    expect(a.toJson()).toEqual([{ x_min: 5, y_min: 7, x_max: 20, y_max: 24 }]);
    // round trip through the stored form restores identical overlays
    const restored = new RoiAnnotator(64, 64);
    restored.loadJson(a.toJson());
    expect(restored.boxes()).toEqual(a.boxes());
  });

  it("maps drags on a 2x zoomed view to correct source pixels", () => {
    const a = new RoiAnnotator(64, 64);
    a.zoom = 2;
    const added = drawBox(a, 10, 10, 39, 39); // view px → source 5..19
    expect(added).toEqual({ xMin: 5, yMin: 5, xMax: 20, yMax: 20 });
  });

  it("rejects overlapping boxes visually (no state change)", () => {
    const a = new RoiAnnotator(64, 64);
    drawBox(a, 0, 0, 20, 20);
    const rejected = drawBox(a, 10, 10, 30, 30);
    expect(rejected).toBeNull();
    expect(a.lastRejection).toBe("overlap");
    expect(a.boxes()).toHaveLength(1);
  });

  it("allows adjacent boxes", () => {
    const a = new RoiAnnotator(64, 64);
    drawBox(a, 0, 0, 9, 9); // box [0,10)
    expect(drawBox(a, 10, 0, 19, 9)).not.toBeNull();
    expect(a.boxes()).toHaveLength(2);
  });

  it("clamps drags that leave the image", () => {
    const a = new RoiAnnotator(32, 32);
    const added = drawBox(a, 25, 25, 60, 60);
    expect(added).toEqual({ xMin: 25, yMin: 25, xMax: 32, yMax: 32 });
  });

  it("pending rectangle tracks the cursor during a drag", () => {
    const a = new RoiAnnotator(64, 64);
    a.beginDrag(4, 4);
    a.dragTo(10, 8);
    expect(a.pending()).toEqual({ xMin: 4, yMin: 4, xMax: 11, yMax: 9 });
    a.endDrag();
    expect(a.pending()).toBeNull();
  });

  it("refuses to load overlapping stored boxes", () => {
    const a = new RoiAnnotator(64, 64);
    expect(() =>
      a.loadJson([
        { x_min: 0, y_min: 0, x_max: 10, y_max: 10 },
        { x_min: 5, y_min: 5, x_max: 15, y_max: 15 },
      ]),
    ).toThrow(/overlap/);
  });
});
