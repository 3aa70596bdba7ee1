/** Browser wiring: binds the logic modules to the page's canvases and forms.
 *
 * Everything stateful lives on the server; this file only renders and
 * forwards events, so a page refresh reconstructs the view from the API.
 */

import { AnimationConsole, validateParams } from "./animation.js";
import { ApiClient } from "./api.js";
import { Dashboard, sparklinePath } from "./dashboard.js";
import { EditSession } from "./editSession.js";
import { RoiAnnotator } from "./roiAnnotator.js";
import { Raster } from "./raster.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function rasterFromImage(img: HTMLImageElement): Raster {
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
  return { width: data.width, height: data.height, data: data.data };
}

function rasterToCanvas(raster: Raster, canvas: HTMLCanvasElement, zoom = 1): void {
  canvas.width = raster.width * zoom;
  canvas.height = raster.height * zoom;
  const ctx = canvas.getContext("2d")!;
  const image = new ImageData(
    new Uint8ClampedArray(raster.data),
    raster.width,
    raster.height,
  );
  const off = document.createElement("canvas");
  off.width = raster.width;
  off.height = raster.height;
  off.getContext("2d")!.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

async function rasterToPngBytes(raster: Raster): Promise<Uint8Array> {
  const canvas = document.createElement("canvas");
  canvas.width = raster.width;
  canvas.height = raster.height;
  canvas
    .getContext("2d")!
    .putImageData(
      new ImageData(new Uint8ClampedArray(raster.data), raster.width, raster.height),
      0,
      0,
    );
  const blob: Blob = await new Promise((resolve, reject) =>
    canvas.toBlob((b) => (b ? resolve(b) : reject(new Error("png encode failed"))), "image/png"),
  );
  return new Uint8Array(await blob.arrayBuffer());
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.crossOrigin = "anonymous";
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load ${url}`));
    img.src = url;
  });
}

export function startApp(): void {
  const client = new ApiClient(
    ($("apiBase") as HTMLInputElement).value || "http://127.0.0.1:8000",
  );
  let projectId: string | null = null;
  let annotator: RoiAnnotator | null = null;
  let dashboard: Dashboard | null = null;
  let editSession: EditSession | null = null;
  let editDrag: { x: number; y: number } | null = null;
  const zoom = 4;

  const status = $("status");
  const roiCanvas = $<HTMLCanvasElement>("roiCanvas");
  const editCanvas = $<HTMLCanvasElement>("editCanvas");
  const resultImg = $<HTMLImageElement>("editResult");
  const gallery = $("gallery");
  const note = (text: string) => (status.textContent = text);

  let sourceRaster: Raster | null = null;

  function redrawRoi(): void {
    if (!sourceRaster || !annotator) return;
    rasterToCanvas(sourceRaster, roiCanvas, zoom);
    const ctx = roiCanvas.getContext("2d")!;
    ctx.strokeStyle = "#ff5050";
    ctx.lineWidth = 2;
    for (const box of annotator.boxes()) {
      ctx.strokeRect(
        box.xMin * zoom,
        box.yMin * zoom,
        (box.xMax - box.xMin) * zoom,
        (box.yMax - box.yMin) * zoom,
      );
    }
    const pending = annotator.pending();
    if (pending) {
      ctx.strokeStyle = "#ffb050";
      ctx.strokeRect(
        pending.xMin * zoom,
        pending.yMin * zoom,
        (pending.xMax - pending.xMin) * zoom,
        (pending.yMax - pending.yMin) * zoom,
      );
    }
  }

  $("upload").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    projectId = await client.createProject(bytes, file.name);
    const img = await loadImage(URL.createObjectURL(file));
    sourceRaster = rasterFromImage(img);
    annotator = new RoiAnnotator(sourceRaster.width, sourceRaster.height);
    annotator.zoom = zoom;
    redrawRoi();
    note(`project ${projectId}: draw ROI boxes, then save and train`);
  });

  roiCanvas.addEventListener("mousedown", (e) => {
    annotator?.beginDrag(e.offsetX, e.offsetY);
  });
  roiCanvas.addEventListener("mousemove", (e) => {
    annotator?.dragTo(e.offsetX, e.offsetY);
    redrawRoi();
  });
  roiCanvas.addEventListener("mouseup", () => {
    if (!annotator) return;
    const added = annotator.endDrag();
    if (!added && annotator.lastRejection === "overlap") {
      note("boxes must not overlap");
    }
    redrawRoi();
  });

  $("saveRoi").addEventListener("click", async () => {
    if (!projectId || !annotator) return;
    const count = await client.setRoi(projectId, annotator.toJson());
    const echoed = await client.getRoi(projectId);
    annotator.loadJson(echoed); // overlays show exactly what the API stores
    redrawRoi();
    note(`${count} boxes stored`);
  });

  $("train").addEventListener("click", async () => {
    if (!projectId) return;
    await client.startTraining(projectId, { profile: "desk" });
    dashboard = new Dashboard(client, projectId, 1000);
    const spark = $("sparkline");
    dashboard.start((s) => {
      note(
        s.status === "training"
          ? `training: stage ${s.scale} step ${s.step}`
          : s.status,
      );
      const series = dashboard!.lossSeries("l2").map((p) => p.losses["l2"]);
      spark.innerHTML = `<svg width="240" height="40"><path d="${sparklinePath(
        series,
        240,
        40,
      )}" fill="none" stroke="#4878a8"/></svg>`;
      const failure = dashboard!.failureReason();
      if (failure) note(`training failed: ${failure}`);
      ($("generate") as HTMLButtonElement).disabled = !dashboard!.canGenerate();
      ($("animate") as HTMLButtonElement).disabled = !dashboard!.canGenerate();
    });
  });

  $("generate").addEventListener("click", async () => {
    if (!projectId) return;
    const samples = await client.generate(projectId, { count: 4, seed: Date.now() % 100000 });
    gallery.innerHTML = "";
    for (const sample of samples) {
      const img = document.createElement("img");
      img.src = client.sampleUrl(sample.id);
      img.width = 128;
      gallery.appendChild(img);
      img.addEventListener("click", async () => {
        const loaded = await loadImage(client.sampleUrl(sample.id));
        editSession = new EditSession(rasterFromImage(loaded));
        rasterToCanvas(editSession.preview(), editCanvas, zoom);
        note("marquee-drag inside the edit canvas to move a patch");
      });
    }
  });

  editCanvas.addEventListener("mousedown", (e) => {
    editDrag = { x: Math.floor(e.offsetX / zoom), y: Math.floor(e.offsetY / zoom) };
  });
  editCanvas.addEventListener("mouseup", (e) => {
    if (!editSession || !editDrag) return;
    const endX = Math.floor(e.offsetX / zoom);
    const endY = Math.floor(e.offsetY / zoom);
    // fixed 10-px marquee around the press point, dragged to the release point
    const src = {
      xMin: editDrag.x,
      yMin: editDrag.y,
      xMax: editDrag.x + 10,
      yMax: editDrag.y + 10,
    };
    const { clamped } = editSession.addMove(src, endX - editDrag.x, endY - editDrag.y);
    if (clamped) note("patch clamped to the image bounds");
    rasterToCanvas(editSession.preview(), editCanvas, zoom);
    editDrag = null;
  });

  $("undo").addEventListener("click", () => {
    if (!editSession) return;
    editSession.undo();
    rasterToCanvas(editSession.preview(), editCanvas, zoom);
  });

  $("applyEdit").addEventListener("click", async () => {
    if (!projectId || !editSession) return;
    const bytes = await rasterToPngBytes(editSession.preview());
    const sample = await client.edit(projectId, bytes, 0);
    resultImg.src = client.sampleUrl(sample.id);
    note("edited sample harmonized");
  });

  $("animate").addEventListener("click", async () => {
    if (!projectId) return;
    const params = {
      kind: ($("animKind") as HTMLSelectElement).value,
      frames: Number(($("animFrames") as HTMLInputElement).value),
      levelMax: Number(($("animLevel") as HTMLInputElement).value),
      fps: 8,
      seed: 0,
    };
    const problem = validateParams(params);
    if (problem) {
      note(problem);
      return;
    }
    const console_ = new AnimationConsole(client, projectId);
    await console_.request(params);
    const scrub = $("scrub") as HTMLInputElement;
    scrub.min = "0";
    scrub.max = String(console_.frameCount() - 1);
    scrub.value = "0";
    const frame = $("frame") as HTMLImageElement;
    frame.src = console_.frameUrl(0);
    scrub.oninput = () => {
      frame.src = console_.frameUrl(Number(scrub.value));
    };
  });
}

if (typeof document !== "undefined" && document.getElementById("roiCanvas")) {
  startApp();
}
