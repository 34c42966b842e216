/** Session controller: the UI's single source of truth.
 *
 * Every field mirrors a server response — explored flags flip only after a
 * 2xx acknowledgment, recommendations and posterior summaries are copied
 * verbatim from rank responses, and the ranking screen unlocks only once
 * the server reports training done.
 */

import {
  ApiError,
  type BehaviorCard,
  type Client,
  type RankResponse,
  type Recommendation,
  type TrainRequest,
} from "./api.js";

export type Phase =
  | "idle"
  | "browsing"
  | "training"
  | "trained"
  | "ranking"
  | "error";

export interface RankingDraft {
  /** Cards of the pending query, in server order. */
  query: BehaviorCard[];
  /** Positions placed so far, worst first; indices into `query`. */
  placed: number[];
}

export interface State {
  phase: Phase;
  sessionId: string | null;
  modality: string | null;
  pageIndex: number;
  gallery: BehaviorCard[];
  closedPages: number;
  trainSummary: Record<string, unknown> | null;
  ranking: RankingDraft | null;
  rounds: number;
  posterior: RankResponse["posterior"] | null;
  recommendations: Recommendation[];
  lastError: string | null;
}

export type Listener = (state: State) => void;

const POLL_INTERVAL_MS = 150;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class SessionController {
  private state: State = {
    phase: "idle",
    sessionId: null,
    modality: null,
    pageIndex: 0,
    gallery: [],
    closedPages: 0,
    trainSummary: null,
    ranking: null,
    rounds: 0,
    posterior: null,
    recommendations: [],
    lastError: null,
  };

  private listeners: Listener[] = [];

  constructor(private readonly client: Client) {}

  getState(): Readonly<State> {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private patch(update: Partial<State>): void {
    this.state = { ...this.state, ...update };
    for (const l of this.listeners) l(this.state);
  }

  private fail(err: unknown): never {
    const message = err instanceof Error ? err.message : String(err);
    this.patch({ lastError: message });
    throw err;
  }

  async open(): Promise<void> {
    try {
      const info = await this.client.createSession();
      this.patch({
        sessionId: info.session_id,
        modality: info.modality,
        phase: "browsing",
        lastError: null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  private sid(): string {
    const id = this.state.sessionId;
    if (id === null) throw new Error("no open session");
    return id;
  }

  async loadPage(size?: number): Promise<void> {
    try {
      const page = await this.client.getPage(this.sid(), size);
      this.patch({
        pageIndex: page.page_index,
        gallery: page.behaviors,
        lastError: null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  /** Explore a gallery item. The explored badge flips only after the
   * server acknowledges the action. */
  async explore(behaviorId: number): Promise<void> {
    try {
      const ack = await this.client.explore(this.sid(), behaviorId);
      this.patch({
        gallery: this.state.gallery.map((b) =>
          b.id === ack.behavior_id ? { ...b, explored: true } : b,
        ),
        lastError: null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  async closePage(): Promise<void> {
    try {
      await this.client.closePage(this.sid());
      this.patch({ closedPages: this.state.closedPages + 1, lastError: null });
    } catch (err) {
      this.fail(err);
    }
  }

  /** Start training and poll until the server reports done or error. */
  async train(req: TrainRequest): Promise<void> {
    const sid = this.sid();
    try {
      await this.client.train(sid, req);
    } catch (err) {
      this.fail(err);
    }
    this.patch({ phase: "training", trainSummary: null, lastError: null });
    for (;;) {
      await sleep(POLL_INTERVAL_MS);
      let status;
      try {
        status = await this.client.trainStatus(sid);
      } catch (err) {
        this.fail(err);
      }
      if (status.status === "done") {
        this.patch({ phase: "trained", trainSummary: status.result });
        return;
      }
      if (status.status === "error") {
        const detail = JSON.stringify(status.result);
        this.patch({ phase: "error", lastError: `training failed: ${detail}` });
        throw new Error(`training failed: ${detail}`);
      }
    }
  }

  get canRank(): boolean {
    return this.state.phase === "trained" || this.state.phase === "ranking";
  }

  async requestQuery(size?: number): Promise<void> {
    if (!this.canRank) {
      throw new Error("ranking requires a trained feature space");
    }
    try {
      const resp = await this.client.rankQuery(this.sid(), size);
      this.patch({
        phase: "ranking",
        ranking: { query: resp.query, placed: [] },
        lastError: null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  /** Place the card at query position `index` as the next-worst slot. */
  place(index: number): void {
    const draft = this.state.ranking;
    if (!draft) throw new Error("no pending ranking query");
    if (index < 0 || index >= draft.query.length) {
      throw new Error(`card index ${index} out of range`);
    }
    if (draft.placed.includes(index)) return;
    this.patch({ ranking: { ...draft, placed: [...draft.placed, index] } });
  }

  /** Remove a placed card so it can be re-ordered. */
  unplace(index: number): void {
    const draft = this.state.ranking;
    if (!draft) throw new Error("no pending ranking query");
    this.patch({
      ranking: { ...draft, placed: draft.placed.filter((i) => i !== index) },
    });
  }

  /** Submission unlocks only once every card has a slot. */
  get canSubmit(): boolean {
    const draft = this.state.ranking;
    return draft !== null && draft.placed.length === draft.query.length;
  }

  async submitRanking(): Promise<RankResponse> {
    const draft = this.state.ranking;
    if (!draft || !this.canSubmit) {
      throw new Error("ranking incomplete: place every card before submitting");
    }
    try {
      const resp = await this.client.rank(this.sid(), draft.placed);
      this.patch({
        phase: "trained",
        ranking: null,
        rounds: resp.round,
        posterior: resp.posterior,
        recommendations: resp.recommendations,
        lastError: null,
      });
      return resp;
    } catch (err) {
      if (err instanceof ApiError) {
        // Surface inline and keep the draft so the user can retry.
        this.patch({ lastError: err.message });
      }
      throw err;
    }
  }

  exportLog(): Promise<string> {
    return this.client.exportLog(this.sid());
  }
}
