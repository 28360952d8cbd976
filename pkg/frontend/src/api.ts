/** Typed client for the annotation service HTTP API. */

import type { RleMask } from "./rle.js";

export type Polarity = "positive" | "negative";

export interface SessionInfo {
  id: string;
  height: number;
  width: number;
}

export interface MaskResponse {
  session_id: string;
  click_count: number;
  mask_rle: RleMask;
  latency_ms?: number;
  iou?: number;
  noop?: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async createSession(image: Blob, gt?: Blob): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", image, "image.png");
    if (gt) form.append("gt", gt, "gt.png");
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: form,
    });
    return parseOrThrow<SessionInfo>(resp);
  }

  async addClick(id: string, row: number, col: number, polarity: Polarity): Promise<MaskResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/clicks`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ row, col, polarity }),
    });
    return parseOrThrow<MaskResponse>(resp);
  }

  async undo(id: string): Promise<MaskResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/undo`, { method: "POST" });
    return parseOrThrow<MaskResponse>(resp);
  }

  async reset(id: string): Promise<MaskResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/reset`, { method: "POST" });
    return parseOrThrow<MaskResponse>(resp);
  }

  maskUrl(id: string): string {
    return `${this.baseUrl}/sessions/${id}/mask`;
  }
}
