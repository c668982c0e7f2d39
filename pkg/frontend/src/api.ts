export type Mode = "immediate" | "recommend";

export interface SegmentResponse {
  segmented: string;
  boundaries: number[];
  scores?: number[];
  model_id: string;
}

export interface FeedbackRequest {
  original: string;
  suggested: string;
  accepted: string;
  client_id?: string;
}

export interface FeedbackResponse {
  accepted: boolean;
  id: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function postJson<T>(url: string, body: unknown, signal?: AbortSignal): Promise<T> {
  const resp = await fetch(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const parsed = (await resp.json()) as { detail?: unknown };
      if (parsed.detail !== undefined) detail = JSON.stringify(parsed.detail);
    } catch {
      // keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin client over the segmentation service; base URL is configurable. */
export class ApiClient {
  constructor(readonly baseUrl: string) {}

  segment(text: string, mode: Mode, signal?: AbortSignal): Promise<SegmentResponse> {
    return postJson(`${this.baseUrl}/v1/segment`, { text, mode }, signal);
  }

  feedback(request: FeedbackRequest): Promise<FeedbackResponse> {
    return postJson(`${this.baseUrl}/v1/feedback`, request);
  }

  async health(): Promise<{ status: string; model_id: string }> {
    const resp = await fetch(`${this.baseUrl}/v1/health`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return (await resp.json()) as { status: string; model_id: string };
  }
}
