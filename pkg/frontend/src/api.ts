/** Typed client for the project service HTTP API. */

import { RoiBoxJson } from "./geometry.js";

export interface StatusResponse {
  status: "created" | "training" | "trained" | "failed";
  branch?: string | null;
  scale?: number | null;
  scale_index?: number | null;
  step?: number | null;
  losses?: Record<string, number> | null;
  error?: string | null;
  updated?: string | null;
}

export interface SampleModel {
  id: string;
  kind: string;
  seed: number;
  band_px: number;
  path: string;
  augment?: unknown[] | null;
}

export interface AnimationResponse {
  frames: SampleModel[];
  fps: number;
  manifest: string;
}

export interface MetricsModel {
  target: string;
  sifid: number;
  diversity: number;
  gqi: number | null;
  sample_count: number;
}

export interface TrainRequest {
  profile?: "desk" | "paper";
  seed?: number;
  iters_per_scale?: number;
  base_channels?: number;
  ablation?: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(`${status}: ${message}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    return (await (await this.request(path, init)).json()) as T;
  }

  async createProject(pngBytes: Uint8Array, name = "upload.png"): Promise<string> {
    const form = new FormData();
    form.append("file", new Blob([pngBytes as BlobPart], { type: "image/png" }), name);
    const body = await this.json<{ id: string }>("/projects", {
      method: "POST",
      body: form,
    });
    return body.id;
  }

  async setRoi(projectId: string, boxes: RoiBoxJson[]): Promise<number> {
    const body = await this.json<{ count: number }>(`/projects/${projectId}/roi`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ boxes }),
    });
    return body.count;
  }

  async getRoi(projectId: string): Promise<RoiBoxJson[]> {
    const body = await this.json<{ boxes: RoiBoxJson[] }>(
      `/projects/${projectId}/roi`,
    );
    return body.boxes;
  }

  async startTraining(projectId: string, config: TrainRequest = {}): Promise<string> {
    const body = await this.json<{ job_id: string }>(`/projects/${projectId}/train`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    return body.job_id;
  }

  async getStatus(projectId: string): Promise<StatusResponse> {
    return this.json<StatusResponse>(`/projects/${projectId}/status`);
  }

  async generate(
    projectId: string,
    req: { count?: number; seed?: number; band_px?: number } = {},
  ): Promise<SampleModel[]> {
    const body = await this.json<{ samples: SampleModel[] }>(
      `/projects/${projectId}/generate`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      },
    );
    return body.samples;
  }

  async edit(
    projectId: string,
    pngBytes: Uint8Array,
    seed = 0,
    bandPx = 3,
  ): Promise<SampleModel> {
    const form = new FormData();
    form.append("file", new Blob([pngBytes as BlobPart], { type: "image/png" }), "edit.png");
    form.append("seed", String(seed));
    form.append("band_px", String(bandPx));
    return this.json<SampleModel>(`/projects/${projectId}/edit`, {
      method: "POST",
      body: form,
    });
  }

  async animate(
    projectId: string,
    req: { kind?: string; frames?: number; level_max?: number; fps?: number; seed?: number } = {},
  ): Promise<AnimationResponse> {
    return this.json<AnimationResponse>(`/projects/${projectId}/animate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  async getMetrics(projectId: string, samples = 8): Promise<MetricsModel[]> {
    return this.json<MetricsModel[]>(
      `/projects/${projectId}/metrics?samples=${samples}`,
    );
  }

  sampleUrl(sampleId: string): string {
    return `${this.baseUrl}/samples/${sampleId}`;
  }

  async sampleBytes(sampleId: string): Promise<Uint8Array> {
    const resp = await this.request(`/samples/${sampleId}`);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async sourceBytes(projectId: string): Promise<Uint8Array> {
    const resp = await this.request(`/projects/${projectId}/source`);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
