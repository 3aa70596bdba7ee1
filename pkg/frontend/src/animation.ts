/** Animation console: request a level sweep, scrub the returned frames. */

import { AnimationResponse, ApiClient, SampleModel } from "./api.js";

export interface AnimationParams {
  kind: string;
  frames: number;
  levelMax: number;
  fps: number;
  seed: number;
}

export const ANIMATION_KINDS = [
  "rotation",
  "affine",
  "perspective",
  "erasing",
  "hflip",
  "vflip",
];

export const MIN_FRAMES = 2;

/** Client-side validation mirroring the server's 422 rules. */
export function validateParams(params: AnimationParams): string | null {
  if (!ANIMATION_KINDS.includes(params.kind)) {
    return `unknown kind ${params.kind}`;
  }
  if (!Number.isInteger(params.frames) || params.frames < MIN_FRAMES) {
    return `frames must be an integer >= ${MIN_FRAMES}`;
  }
  if (!(params.levelMax >= 0 && params.levelMax <= 1)) {
    return "level_max must be in [0, 1]";
  }
  if (!Number.isInteger(params.fps) || params.fps < 1) {
    return "fps must be a positive integer";
  }
  return null;
}

export class AnimationConsole {
  private response: AnimationResponse | null = null;
  private index = 0;

  constructor(
    private readonly client: ApiClient,
    private readonly projectId: string,
  ) {}

  async request(params: AnimationParams): Promise<AnimationResponse> {
    const problem = validateParams(params);
    if (problem) throw new Error(problem);
    this.response = await this.client.animate(this.projectId, {
      kind: params.kind,
      frames: params.frames,
      level_max: params.levelMax,
      fps: params.fps,
      seed: params.seed,
    });
    this.index = 0;
    return this.response;
  }

  frameCount(): number {
    return this.response?.frames.length ?? 0;
  }

  scrub(index: number): SampleModel {
    if (!this.response) throw new Error("no animation requested yet");
    if (index < 0 || index >= this.response.frames.length) {
      throw new Error(`frame ${index} outside 0..${this.response.frames.length - 1}`);
    }
    this.index = index;
    return this.response.frames[index];
  }

  current(): SampleModel | null {
    return this.response ? this.response.frames[this.index] : null;
  }

  frameUrl(index: number): string {
    return this.client.sampleUrl(this.scrub(index).id);
  }
}
