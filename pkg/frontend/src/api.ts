import type {
  AdvanceResponse,
  BatchResponse,
  LabelEntry,
  LabelsResponse,
  MetricsResponse,
  StatusResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error raised for any failed request. `status` is 0 when the request never
 * reached the server (connection refused, offline), so callers can tell a
 * transport failure apart from a rejected one. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private token: string | null = null,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  batch(sessionId: string): Promise<BatchResponse> {
    return this.request("GET", `/sessions/${sessionId}/batch`);
  }

  submitLabels(sessionId: string, labels: LabelEntry[]): Promise<LabelsResponse> {
    return this.request("POST", `/sessions/${sessionId}/labels`, { labels });
  }

  advance(sessionId: string): Promise<AdvanceResponse> {
    return this.request("POST", `/sessions/${sessionId}/advance`);
  }

  status(sessionId: string): Promise<StatusResponse> {
    return this.request("GET", `/sessions/${sessionId}/status`);
  }

  metrics(sessionId: string): Promise<MetricsResponse> {
    return this.request("GET", `/sessions/${sessionId}/metrics`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["content-type"] = "application/json";

    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, err instanceof Error ? err.message : String(err));
    }
    if (!res.ok) {
      throw new ApiError(res.status, await extractDetail(res));
    }
    return (await res.json()) as T;
  }
}

async function extractDetail(res: Response): Promise<string> {
  try {
    const payload: unknown = await res.json();
    if (payload && typeof payload === "object" && "detail" in payload) {
      const detail = (payload as { detail: unknown }).detail;
      if (typeof detail === "string") return detail;
      return JSON.stringify(detail);
    }
    return JSON.stringify(payload);
  } catch {
    return `request failed with status ${res.status}`;
  }
}
