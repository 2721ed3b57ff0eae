import { QueryView, SessionList } from "./types.js";

// Minimal slice of the fetch contract the client uses; lets tests hand in
// a plain async stub without pulling a Response polyfill.
export interface ResponseLike {
  ok: boolean;
  status: number;
  statusText: string;
  json(): Promise<any>;
}

export type FetchLike = (path: string, init?: RequestInit) => Promise<ResponseLike>;

/** Error carrying the HTTP status and the service's `detail` message. status 0 means the service was unreachable. */
export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ServiceError";
  }
}

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(private base = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((path, init) => fetch(path, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: ResponseLike;
    try {
      resp = await this.fetchFn(this.base + path, init);
    } catch {
      throw new ServiceError(0, "service unreachable");
    }
    if (!resp.ok) {
      let detail = resp.statusText || `HTTP ${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the status text
      }
      throw new ServiceError(resp.status, detail);
    }
    return resp.json();
  }

  listSessions(): Promise<SessionList> {
    return this.request<SessionList>("/sessions");
  }

  createSession(scenario: string, config: Record<string, unknown>): Promise<QueryView> {
    return this.request<QueryView>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scenario, config }),
    });
  }

  getQuery(id: string): Promise<QueryView> {
    return this.request<QueryView>(`/sessions/${id}/query`);
  }

  submitPreference(id: string, b: -1 | 0 | 1): Promise<QueryView> {
    return this.request<QueryView>(`/sessions/${id}/preference`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ b }),
    });
  }

  exportUrl(id: string, format: "csv" | "session-file"): string {
    return `${this.base}/sessions/${id}/export?format=${format}`;
  }
}
