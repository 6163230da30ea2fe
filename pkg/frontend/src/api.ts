import type { RleMask } from "./rle.js";

export type ComponentLabel = "apple" | "background" | "ground";

export type SessionInfo = {
  session_id: string;
  dataset: string;
  state: "open" | "finalized";
  frames: string[];
  components: number;
};

export type ClickResponse = {
  component_id: number;
  highlight_mask_rle: RleMask;
};

export type LabelResponse = {
  component_id: number;
  label: ComponentLabel;
  labels: Record<string, ComponentLabel>;
};

export type FinalizeResponse = {
  model_id: string;
  components: number;
};

export type DetectionRecord = {
  frame: string;
  bbox: [number, number, number, number];
  area: number;
  mask_rle: RleMask;
};

export type DetectResponse = {
  frame: string;
  detections: DetectionRecord[];
};

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Thin typed client over the /v1 supervision API. */
export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const doc = await resp.json();
        if (doc && doc.detail) detail = JSON.stringify(doc.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(dataset: string, frames?: string[], frameLimit?: number): Promise<SessionInfo> {
    return this.request("POST", "/v1/sessions", {
      dataset,
      frames: frames ?? null,
      frame_limit: frameLimit ?? 5,
    });
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request("GET", `/v1/sessions/${sessionId}`);
  }

  click(sessionId: string, frame: string, x: number, y: number, token?: string): Promise<ClickResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/click`, {
      frame,
      x,
      y,
      request_token: token ?? null,
    });
  }

  label(sessionId: string, componentId: number, label: ComponentLabel, token?: string): Promise<LabelResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/label`, {
      component_id: componentId,
      label,
      request_token: token ?? null,
    });
  }

  finalize(sessionId: string, token?: string): Promise<FinalizeResponse> {
    return this.request("POST", `/v1/sessions/${sessionId}/finalize`, {
      request_token: token ?? null,
    });
  }

  detect(modelId: string, frame: string): Promise<DetectResponse> {
    return this.request("POST", `/v1/models/${modelId}/detect?frame=${encodeURIComponent(frame)}`);
  }

  frameUrl(frameId: string): string {
    return `${this.baseUrl}/v1/frames/${frameId}`;
  }
}
