/** Typed client for the prefspace session API. All state shown in the UI
 * originates from these responses; the client never fabricates fields. */

export type Modality = "visual" | "auditory" | "kinetic";

export interface SessionInfo {
  session_id: string;
  db_size: number;
  modality: Modality;
}

export interface BehaviorCard {
  id: number;
  modality: Modality;
  summary: number[];
  explored: boolean;
}

export interface PageResponse {
  page_index: number;
  behaviors: BehaviorCard[];
}

export interface ExploreResponse {
  behavior_id: number;
  explored: boolean;
  order: number;
}

export interface ClosePageResponse {
  page_id: number;
  explored: number;
  ignored: number;
  contrastive: boolean;
}

export interface TrainRequest {
  objective: string;
  dim: number;
  alpha?: number;
  beta?: number;
  epochs?: number;
  pool_population?: boolean;
}

export interface TrainStatus {
  status: "idle" | "running" | "done" | "error";
  result: Record<string, unknown> | null;
}

export interface RankQueryResponse {
  query: BehaviorCard[];
}

export interface Recommendation {
  id: number;
  posterior_mean_reward: number;
}

export interface RankResponse {
  round: number;
  posterior: { mean: number[]; sample_spread: number; comparisons: number };
  recommendations: Recommendation[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const data = (await resp.json()) as { detail?: string };
        if (data.detail) detail = data.detail;
      } catch {
        /* non-JSON error body; keep statusText */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(): Promise<SessionInfo> {
    return this.request("POST", "/sessions");
  }

  getPage(sessionId: string, size?: number): Promise<PageResponse> {
    const q = size === undefined ? "" : `?size=${size}`;
    return this.request("GET", `/sessions/${sessionId}/page${q}`);
  }

  explore(sessionId: string, behaviorId: number): Promise<ExploreResponse> {
    return this.request("POST", `/sessions/${sessionId}/explore`, {
      behavior_id: behaviorId,
    });
  }

  closePage(sessionId: string): Promise<ClosePageResponse> {
    return this.request("POST", `/sessions/${sessionId}/page/close`);
  }

  train(sessionId: string, req: TrainRequest): Promise<{ status: string }> {
    return this.request("POST", `/sessions/${sessionId}/train`, req);
  }

  trainStatus(sessionId: string): Promise<TrainStatus> {
    return this.request("GET", `/sessions/${sessionId}/train/status`);
  }

  rankQuery(sessionId: string, size?: number): Promise<RankQueryResponse> {
    const q = size === undefined ? "" : `?size=${size}`;
    return this.request("GET", `/sessions/${sessionId}/rank-query${q}`);
  }

  rank(sessionId: string, sigma: number[]): Promise<RankResponse> {
    return this.request("POST", `/sessions/${sessionId}/rank`, { sigma });
  }

  async exportLog(sessionId: string): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/export`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }
}
