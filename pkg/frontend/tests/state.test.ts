import { describe, expect, it } from "vitest";

import { ApiError, Client, type BehaviorCard } from "../src/api.js";
import { SessionController } from "../src/state.js";

/** Minimal in-memory stand-in for the session service. */
class FakeServer {
  explored = new Set<number>();
  trainPolls = 0;
  failExplore = false;
  rankRounds = 0;
  lastSigma: number[] | null = null;

  private cards(ids: number[]): BehaviorCard[] {
    return ids.map((id) => ({
      id,
      modality: "visual" as const,
      summary: new Array(16).fill(0),
      explored: this.explored.has(id),
    }));
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = new URL(url).pathname;
    const body = init?.body ? JSON.parse(init.body as string) : null;

    const json = (data: unknown, status = 200) =>
      new Response(JSON.stringify(data), {
        status,
        headers: { "content-type": "application/json" },
      });

    if (path === "/sessions") {
      return json({ session_id: "s1", db_size: 40, modality: "visual" });
    }
    if (path.endsWith("/page")) {
      return json({ page_index: 0, behaviors: this.cards([0, 1, 2, 3, 4, 5]) });
    }
    if (path.endsWith("/explore")) {
      if (this.failExplore) return json({ detail: "boom" }, 500);
      this.explored.add(body.behavior_id);
      return json({ behavior_id: body.behavior_id, explored: true, order: 0 });
    }
    if (path.endsWith("/page/close")) {
      return json({ page_id: 0, explored: this.explored.size, ignored: 6, contrastive: true });
    }
    if (path.endsWith("/train/status")) {
      this.trainPolls += 1;
      return json(
        this.trainPolls < 3
          ? { status: "running", result: null }
          : { status: "done", result: { objective: "clea", dim: 4 } },
      );
    }
    if (path.endsWith("/train")) {
      return json({ status: "running" }, 202);
    }
    if (path.endsWith("/rank-query")) {
      return json({ query: this.cards([10, 11, 12, 13, 14]) });
    }
    if (path.endsWith("/rank")) {
      this.rankRounds += 1;
      this.lastSigma = body.sigma;
      return json({
        round: this.rankRounds,
        posterior: { mean: [0.1, 0.2, 0.3, 0.4], sample_spread: 0.2, comparisons: 10 },
        recommendations: [{ id: 3, posterior_mean_reward: 1.5 }],
      });
    }
    if (path.endsWith("/export")) {
      return new Response('{"page_id": 0, "presented": [0], "explored": [0], "explore_order": [0]}\n');
    }
    return json({ detail: `unknown path ${path}` }, 404);
  };
}

function makeController(server: FakeServer): SessionController {
  return new SessionController(new Client("http://fake", server.fetch));
}

describe("SessionController", () => {
  it("flips explored badges only after server acknowledgment", async () => {
    const server = new FakeServer();
    const c = makeController(server);
    await c.open();
    await c.loadPage();
    expect(c.getState().gallery.every((b) => !b.explored)).toBe(true);

    await c.explore(2);
    expect(c.getState().gallery.find((b) => b.id === 2)!.explored).toBe(true);
    expect(c.getState().gallery.filter((b) => b.explored)).toHaveLength(1);
  });

  it("keeps the badge unset when the server rejects the explore", async () => {
    const server = new FakeServer();
    server.failExplore = true;
    const c = makeController(server);
    await c.open();
    await c.loadPage();
    await expect(c.explore(2)).rejects.toBeInstanceOf(ApiError);
    expect(c.getState().gallery.find((b) => b.id === 2)!.explored).toBe(false);
    expect(c.getState().lastError).toMatch(/boom/);
  });

  it("refuses ranking before training and unlocks it after", async () => {
    const server = new FakeServer();
    const c = makeController(server);
    await c.open();
    expect(c.canRank).toBe(false);
    await expect(c.requestQuery()).rejects.toThrow(/trained/);

    await c.train({ objective: "clea", dim: 4 });
    expect(c.getState().phase).toBe("trained");
    expect(server.trainPolls).toBeGreaterThanOrEqual(3);
    expect(c.canRank).toBe(true);
  });

  it("blocks submission until all cards are placed, then submits the permutation", async () => {
    const server = new FakeServer();
    const c = makeController(server);
    await c.open();
    await c.train({ objective: "clea", dim: 4 });
    await c.requestQuery();

    expect(c.canSubmit).toBe(false);
    await expect(c.submitRanking()).rejects.toThrow(/incomplete/);

    for (const i of [3, 0, 4, 1]) c.place(i);
    expect(c.canSubmit).toBe(false);
    c.place(2);
    expect(c.canSubmit).toBe(true);

    const resp = await c.submitRanking();
    expect(server.lastSigma).toEqual([3, 0, 4, 1, 2]);
    expect(resp.recommendations).toHaveLength(1);
    expect(c.getState().recommendations[0]!.id).toBe(3);
    expect(c.getState().ranking).toBeNull();
  });

  it("supports re-ordering via unplace and ignores duplicate placements", async () => {
    const server = new FakeServer();
    const c = makeController(server);
    await c.open();
    await c.train({ objective: "clea", dim: 4 });
    await c.requestQuery();

    c.place(0);
    c.place(0);
    expect(c.getState().ranking!.placed).toEqual([0]);
    c.place(1);
    c.unplace(0);
    expect(c.getState().ranking!.placed).toEqual([1]);
  });

  it("exports the session log text verbatim", async () => {
    const server = new FakeServer();
    const c = makeController(server);
    await c.open();
    const log = await c.exportLog();
    expect(log).toContain('"presented"');
  });
});
