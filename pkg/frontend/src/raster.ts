/** RGBA pixel buffers and the patch-move compositing used by the editor.
 *
 * A Raster mirrors the browser's ImageData layout (row-major RGBA bytes), so
 * canvases can blit these buffers directly while the arithmetic stays pure
 * and testable.
 */

import { Rect, clampRect, rectHeight, rectWidth } from "./geometry.js";

export interface Raster {
  width: number;
  height: number;
  data: Uint8ClampedArray; // length = width * height * 4
}

export interface PatchMove {
  src: Rect; // region copied from the current composite
  dx: number; // destination offset of the patch origin
  dy: number;
}

export function makeRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export function cloneRaster(r: Raster): Raster {
  return { width: r.width, height: r.height, data: new Uint8ClampedArray(r.data) };
}

export function rastersEqual(a: Raster, b: Raster): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

export function copyPatch(src: Raster, rect: Rect): Raster {
  const w = rectWidth(rect);
  const h = rectHeight(rect);
  const out = makeRaster(w, h);
  for (let y = 0; y < h; y++) {
    const srcOff = ((rect.yMin + y) * src.width + rect.xMin) * 4;
    out.data.set(src.data.subarray(srcOff, srcOff + w * 4), y * w * 4);
  }
  return out;
}

export function pastePatch(dst: Raster, patch: Raster, x: number, y: number): void {
  for (let row = 0; row < patch.height; row++) {
    const dy = y + row;
    if (dy < 0 || dy >= dst.height) continue;
    for (let col = 0; col < patch.width; col++) {
      const dx = x + col;
      if (dx < 0 || dx >= dst.width) continue;
      const s = (row * patch.width + col) * 4;
      const d = (dy * dst.width + dx) * 4;
      dst.data[d] = patch.data[s];
      dst.data[d + 1] = patch.data[s + 1];
      dst.data[d + 2] = patch.data[s + 2];
      dst.data[d + 3] = patch.data[s + 3];
    }
  }
}

/** Keep a move's destination inside the image; reports whether it moved. */
export function clampMove(move: PatchMove, width: number, height: number): {
  move: PatchMove;
  clamped: boolean;
} {
  const w = rectWidth(move.src);
  const h = rectHeight(move.src);
  const destX = move.src.xMin + move.dx;
  const destY = move.src.yMin + move.dy;
  const clampedX = Math.max(0, Math.min(destX, width - w));
  const clampedY = Math.max(0, Math.min(destY, height - h));
  const clamped = clampedX !== destX || clampedY !== destY;
  return {
    move: {
      src: move.src,
      dx: clampedX - move.src.xMin,
      dy: clampedY - move.src.yMin,
    },
    clamped,
  };
}

/** Apply moves in order; each copies from the composite built so far. */
export function compositeMoves(base: Raster, moves: PatchMove[]): Raster {
  let out = cloneRaster(base);
  for (const move of moves) {
    const src = clampRect(move.src, out.width, out.height);
    const patch = copyPatch(out, src);
    pastePatch(out, patch, src.xMin + move.dx, src.yMin + move.dy);
  }
  return out;
}
