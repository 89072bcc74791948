/** Typed client for the rendering service HTTP API. */
import { Pose } from "./arcball.js";

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  source: string;
  sparsity: number;
}

export interface ModelInfo {
  descriptor: string;
  delta_ref: number;
  target_field: string;
  m_lobes: number;
  g: { deltas: number[]; tnorm: number[]; delta_ref: number } | null;
}

export interface RenderStatsJson {
  wall_ms: number;
  samples_primary: number;
  samples_shadow: number;
  rays_ert_terminated: number;
  rays_total: number;
}

export interface RenderResponse {
  frame_png_b64: string;
  stats: RenderStatsJson;
  predicted_ms: number | null;
  delta_used: number;
}

export interface RenderRequest {
  volume_id: string;
  pose: Pose;
  kappa: number[];
  img: [number, number];
  delta?: number;
  controller?: { enabled: boolean; target_ms: number };
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new Error(`${path}: HTTP ${res.status} ${await res.text()}`);
    }
    return (await res.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) {
      throw new Error(`${path}: HTTP ${res.status}`);
    }
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.get("/api/health");
  }

  volumes(): Promise<VolumeInfo[]> {
    return this.get("/api/volumes");
  }

  model(): Promise<ModelInfo> {
    return this.get("/api/model");
  }

  render(req: RenderRequest): Promise<RenderResponse> {
    return this.post("/api/render", req);
  }

  predict(req: Omit<RenderRequest, "delta" | "controller">): Promise<{ predicted_ms: number }> {
    return this.post("/api/predict", req);
  }

  opacity(kappa: number[], samples: number): Promise<{ s: number[]; opacity: number[] }> {
    return this.post("/api/opacity", { kappa, samples });
  }
}
