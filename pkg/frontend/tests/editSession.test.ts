import { describe, expect, it } from "vitest";

import { EditSession } from "../src/editSession.js";
import { Raster, compositeMoves, copyPatch, makeRaster, rastersEqual } from "../src/raster.js";

function patterned(width: number, height: number): Raster {
  const r = makeRaster(width, height);
  for (let i = 0; i < width * height; i++) {
    r.data[i * 4] = (i * 7) % 256;
    r.data[i * 4 + 1] = (i * 13) % 256;
    r.data[i * 4 + 2] = (i * 29) % 256;
    r.data[i * 4 + 3] = 255;
  }
  return r;
}

describe("EditSession", () => {
  it("zero moves: preview equals the base exactly", () => {
    const base = patterned(16, 12);
    const session = new EditSession(base);
    expect(rastersEqual(session.preview(), base)).toBe(true);
  });

  it("undo after one move restores the base exactly", () => {
    const base = patterned(16, 16);
    const session = new EditSession(base);
    session.addMove({ xMin: 1, yMin: 1, xMax: 5, yMax: 5 }, 8, 8);
    expect(rastersEqual(session.preview(), base)).toBe(false);
    expect(session.undo()).toBe(true);
    expect(rastersEqual(session.preview(), base)).toBe(true);
    expect(session.undo()).toBe(false);
  });

  it("preview equals applying the moves in order", () => {
    const base = patterned(20, 20);
    const session = new EditSession(base);
    session.addMove({ xMin: 0, yMin: 0, xMax: 4, yMax: 4 }, 10, 10);
    session.addMove({ xMin: 8, yMin: 8, xMax: 14, yMax: 14 }, -3, 2);
    const expected = compositeMoves(base, session.moves);
    expect(rastersEqual(session.preview(), expected)).toBe(true);
  });

  it("moved patch lands with identical pixels", () => {
    const base = patterned(16, 16);
    const session = new EditSession(base);
    const src = { xMin: 2, yMin: 3, xMax: 6, yMax: 7 };
    session.addMove(src, 7, 5);
    const out = session.preview();
    const moved = copyPatch(out, { xMin: 9, yMin: 8, xMax: 13, yMax: 12 });
    const original = copyPatch(base, src);
    expect(rastersEqual(moved, original)).toBe(true);
  });

  it("clamps out-of-bounds destinations and reports it", () => {
    const base = patterned(16, 16);
    const session = new EditSession(base);
    const { applied, clamped } = session.addMove(
      { xMin: 10, yMin: 10, xMax: 14, yMax: 14 },
      100,
      100,
    );
    expect(clamped).toBe(true);
    expect(applied.src.xMin + applied.dx).toBe(12); // width 16 - patch 4
    expect(applied.src.yMin + applied.dy).toBe(12);
  });

  it("later moves copy from the already-composited image", () => {
    const base = makeRaster(8, 1);
    for (let x = 0; x < 8; x++) base.data[x * 4] = x * 10;
    const session = new EditSession(base);
    session.addMove({ xMin: 0, yMin: 0, xMax: 1, yMax: 1 }, 4, 0); // 0 → col 4
    session.addMove({ xMin: 4, yMin: 0, xMax: 5, yMax: 1 }, 3, 0); // copies the NEW col 4
    const out = session.preview();
    expect(out.data[7 * 4]).toBe(0); // the moved-then-moved value, not 70
  });
});
