/** Scripted lifecycle against a live service: upload → ROI draw → train
 * (desk profile) → generate → edit → animate, driven through the same
 * modules the browser page uses.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Dashboard } from "../src/dashboard.js";
import { EditSession } from "../src/editSession.js";
import { Raster, makeRaster, rastersEqual } from "../src/raster.js";
import { RoiAnnotator } from "../src/roiAnnotator.js";
import { AnimationConsole } from "../src/animation.js";
import { decodePng, encodePng } from "./pngCodec.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const PY_SRC = resolve(HERE, "..", "..", "src");
const PORT = 18000 + Math.floor(Math.random() * 1000);
const BASE = `http://127.0.0.1:${PORT}`;

const SERVER_SCRIPT = `
import sys
sys.path.insert(0, ${JSON.stringify(PY_SRC)})
import torch
torch.set_num_threads(1)
import uvicorn
from mogan.project import ProjectStore
from mogan.service import create_app
app = create_app(ProjectStore(sys.argv[1]))
uvicorn.run(app, host="127.0.0.1", port=int(sys.argv[2]), log_level="warning")
`;

function toyImage(size = 33): Raster {
  const raster = makeRaster(size, size);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 4;
      raster.data[i] = 100 + Math.floor((100 * y) / size);
      raster.data[i + 1] = 130 + Math.floor((80 * y) / size);
      raster.data[i + 2] = 210 - Math.floor((40 * y) / size);
      raster.data[i + 3] = 255;
      const inBlob = (x - 16) ** 2 + (y - 14) ** 2 < 49;
      if (inBlob) {
        raster.data[i] = 40;
        raster.data[i + 1] = 120 + ((x * 13) % 40);
        raster.data[i + 2] = 50;
      }
    }
  }
  return raster;
}

let server: ChildProcess;
let storeDir: string;
const client = new ApiClient(BASE);

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/openapi.json`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  storeDir = mkdtempSync(join(tmpdir(), "mogan-e2e-"));
  server = spawn("python3", ["-c", SERVER_SCRIPT, storeDir, String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill("SIGKILL");
  rmSync(storeDir, { recursive: true, force: true });
});

describe("ui lifecycle against a live service", () => {
  let projectId: string;
  const source = toyImage();

  it(
    "runs upload → ROI → train → generate → edit → animate",
    async () => {
      // upload
      projectId = await client.createProject(encodePng(source), "toy.png");
      expect(projectId).toMatch(/^[0-9a-f]+$/);

      // draw a box on a 2× zoomed view; stored integers must round-trip
      // (the crop must stay >= 25 px per side to build its own pyramid)
      const annotator = new RoiAnnotator(source.width, source.height);
      annotator.zoom = 2;
      annotator.beginDrag(6, 6); // source (3, 3)
      annotator.dragTo(57, 57); // source (28, 28) → box [3,29)×[3,29)
      expect(annotator.endDrag()).toEqual({ xMin: 3, yMin: 3, xMax: 29, yMax: 29 });
      await client.setRoi(projectId, annotator.toJson());
      const echoed = await client.getRoi(projectId);
      expect(echoed).toEqual(annotator.toJson()); // exact round trip
      const restored = new RoiAnnotator(source.width, source.height);
      restored.loadJson(echoed);
      expect(restored.boxes()).toEqual(annotator.boxes());

      // train on the desk profile (narrow channels keep the e2e quick)
      await client.startTraining(projectId, {
        profile: "desk",
        base_channels: 8,
        seed: 3,
      });
      const dashboard = new Dashboard(client, projectId, 1000);
      const deadline = Date.now() + 15 * 60 * 1000;
      while (Date.now() < deadline) {
        const status = await dashboard.pollOnce();
        if (status.status === "trained" || status.status === "failed") break;
        await new Promise((r) => setTimeout(r, 1000));
      }
      expect(dashboard.failureReason()).toBeNull();
      expect(dashboard.canGenerate()).toBe(true);
      expect(dashboard.progressIsMonotone()).toBe(true);

      // generate
      const samples = await client.generate(projectId, { count: 2, seed: 11 });
      expect(samples).toHaveLength(2);
      const sampleRaster = decodePng(await client.sampleBytes(samples[0].id));
      expect(sampleRaster.width).toBe(source.width);
      expect(sampleRaster.height).toBe(source.height);

      // edit: move a patch, composite client-side, upload the finished image
      const session = new EditSession(sampleRaster);
      session.addMove({ xMin: 10, yMin: 9, xMax: 20, yMax: 19 }, 6, 7);
      const composite = session.preview();
      const uploadBytes = encodePng(composite);
      // the uploaded bytes decode to exactly the composited preview
      expect(rastersEqual(decodePng(uploadBytes), composite)).toBe(true);
      const edited = await client.edit(projectId, uploadBytes, 5);
      expect(edited.kind).toBe("edit");
      const harmonized = decodePng(await client.sampleBytes(edited.id));
      expect(harmonized.width).toBe(source.width);

      // animate and scrub
      const console_ = new AnimationConsole(client, projectId);
      const anim = await console_.request({
        kind: "rotation",
        frames: 3,
        levelMax: 0.5,
        fps: 8,
        seed: 21,
      });
      expect(console_.frameCount()).toBe(anim.frames.length);
      expect(anim.frames).toHaveLength(3);
      const frame0 = await client.sampleBytes(console_.scrub(0).id);

      // re-request with the same seed: frame 0 is byte-identical
      const again = await console_.request({
        kind: "rotation",
        frames: 3,
        levelMax: 0.5,
        fps: 8,
        seed: 21,
      });
      const frame0Again = await client.sampleBytes(again.frames[0].id);
      expect(Buffer.from(frame0Again).equals(Buffer.from(frame0))).toBe(true);
    },
    20 * 60 * 1000,
  );
});
