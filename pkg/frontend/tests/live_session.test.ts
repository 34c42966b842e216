// @vitest-environment jsdom
/**
 * Scripted browser session against a live service: explore → train →
 * rank ×3 → recommendations, with zero console errors, then export the
 * log and re-ingest it server-side (which validates the explored/ignored
 * partition of every page).
 */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { Client } from "../src/api.js";
import type { Ctx2D } from "../src/render.js";
import { mountApp, type App } from "../src/ui.js";

const execFileP = promisify(execFile);
const PORT = 8310 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

async function waitFor(pred: () => boolean, what: string, timeoutMs = 180_000): Promise<void> {
  const t0 = Date.now();
  while (!pred()) {
    if (Date.now() - t0 > timeoutMs) throw new Error(`timed out waiting for ${what}`);
    await sleep(50);
  }
}

beforeAll(async () => {
  service = spawn("python3", [join(__dirname, "..", "scripts", "test_service.py"), String(PORT)], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  let ready = false;
  service.stdout!.on("data", (chunk: Buffer) => {
    if (chunk.toString().includes("READY")) ready = true;
  });
  await waitFor(() => ready, "service startup", 60_000);
});

afterAll(() => {
  service?.kill();
});

/** jsdom has no 2D canvas; tests inject a no-op recording context. */
const fakeContext = (): Ctx2D => ({
  fillStyle: "",
  strokeStyle: "",
  lineWidth: 0,
  clearRect: () => {},
  fillRect: () => {},
  beginPath: () => {},
  moveTo: () => {},
  lineTo: () => {},
  stroke: () => {},
});

function click(el: Element): void {
  (el as HTMLElement).click();
}

describe("scripted live session", () => {
  it("completes explore → train → rank ×3 with populated recommendations and no console errors", async () => {
    const consoleErrors = vi.spyOn(console, "error");

    const root = document.createElement("div");
    document.body.append(root);
    const app: App = mountApp(root, new Client(BASE), {
      pageSize: 30,
      querySize: 5,
      contextFor: fakeContext,
    });
    await app.start();

    const state = () => app.controller.getState();
    await waitFor(() => state().gallery.length === 30, "gallery of 30");

    // Explore 6 items by clicking their cards; badges flip on 2xx only.
    const cards = root.querySelectorAll(".gallery .card");
    for (let i = 0; i < 6; i++) click(cards[i * 3]!);
    await waitFor(() => state().gallery.filter((b) => b.explored).length === 6, "6 explores");
    expect(root.querySelectorAll(".gallery .card.explored")).toHaveLength(6);

    // Close the page; the app fetches the next one.
    click(root.querySelector(".close-page")!);
    await waitFor(() => state().closedPages === 1 && state().pageIndex === 1, "page close");

    // Train clea at dim 4 via the pickers.
    (root.querySelector(".objective-picker") as HTMLSelectElement).value = "clea";
    (root.querySelector(".dim-picker") as HTMLSelectElement).value = "4";
    const rankButton = root.querySelector(".rank-query") as HTMLButtonElement;
    expect(rankButton.disabled).toBe(true); // rank locked before training
    click(root.querySelector(".train")!);
    await waitFor(() => state().phase === "trained", "training completion");
    expect(state().trainSummary).toMatchObject({ objective: "clea", dim: 4 });
    expect(state().lastError).toBeNull();

    // Three ranking rounds: place all five cards worst-to-best, submit.
    for (let round = 1; round <= 3; round++) {
      click(root.querySelector(".rank-query")!);
      await waitFor(() => state().ranking !== null, `query ${round}`);
      expect(state().ranking!.query).toHaveLength(5);

      const submit = root.querySelector(".submit-ranking") as HTMLButtonElement;
      expect(submit.disabled).toBe(true); // incomplete ordering cannot submit
      while (state().ranking && state().ranking!.placed.length < 5) {
        click(root.querySelector(".rank-pool .card")!);
        await sleep(10);
      }
      expect((root.querySelector(".submit-ranking") as HTMLButtonElement).disabled).toBe(false);
      click(root.querySelector(".submit-ranking")!);
      await waitFor(() => state().rounds === round, `rank round ${round}`);
    }

    expect(state().recommendations.length).toBeGreaterThanOrEqual(5);
    expect(root.querySelectorAll(".recommendations .rec").length).toBeGreaterThanOrEqual(5);
    expect(state().posterior!.comparisons).toBe(30); // 3 rounds x C(5,2)

    // Export the log and re-ingest it server-side (validates the
    // explored/ignored partition of each page).
    click(root.querySelector(".export")!);
    await waitFor(() => app.lastExport !== null, "export");
    const dir = mkdtempSync(join(tmpdir(), "prefspace-ui-"));
    const logPath = join(dir, "session.jsonl");
    writeFileSync(logPath, app.lastExport!);
    const { stdout } = await execFileP("python3", [
      "-c",
      [
        "import sys",
        "from prefspace.exploration import ingest_session_log",
        "pages = ingest_session_log(sys.argv[1])",
        "assert pages and all(set(p.explored) | set(p.ignored) == set(p.presented) for p in pages)",
        "assert all(not (set(p.explored) & set(p.ignored)) for p in pages)",
        "print(f'ok {len(pages)} pages')",
      ].join("\n"),
      logPath,
    ]);
    expect(stdout).toMatch(/^ok \d+ pages/);

    expect(consoleErrors).not.toHaveBeenCalled();
  }, 300_000);
});
