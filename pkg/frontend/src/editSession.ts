/** Patch-move editing over a base sample, composited client-side.
 *
 * The composited preview always equals replaying the move list over the
 * base, so undo is exact and the uploaded image is byte-for-byte what the
 * preview shows.
 */

import { Rect } from "./geometry.js";
import {
  PatchMove,
  Raster,
  clampMove,
  cloneRaster,
  compositeMoves,
} from "./raster.js";

export interface MoveResult {
  applied: PatchMove;
  clamped: boolean;
}

export class EditSession {
  private readonly base: Raster;
  private history: PatchMove[] = [];

  constructor(base: Raster) {
    this.base = cloneRaster(base);
  }

  get moves(): PatchMove[] {
    return this.history.map((m) => ({ ...m, src: { ...m.src } }));
  }

  /** Add a move; out-of-bounds destinations are clamped with a warning flag. */
  addMove(src: Rect, dx: number, dy: number): MoveResult {
    const { move, clamped } = clampMove(
      { src, dx, dy },
      this.base.width,
      this.base.height,
    );
    this.history.push(move);
    return { applied: move, clamped };
  }

  /** Remove the latest move; the preview returns to the prior state exactly. */
  undo(): boolean {
    return this.history.pop() !== undefined;
  }

  reset(): void {
    this.history = [];
  }

  preview(): Raster {
    return compositeMoves(this.base, this.history);
  }
}
