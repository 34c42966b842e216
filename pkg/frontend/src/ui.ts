/** DOM layer: renders controller state, forwards user actions.
 *
 * The layer is deliberately thin — every displayed datum comes from the
 * controller's state (which mirrors server responses), and every handler
 * delegates to a controller method. Failures surface inline with a retry
 * affordance rather than being swallowed.
 */

import type { Client } from "./api.js";
import type { Ctx2D } from "./render.js";
import { drawSummary } from "./render.js";
import { SessionController, type State } from "./state.js";

export interface MountOptions {
  pageSize?: number;
  querySize?: number;
  /** Context factory, overridable for environments without 2D canvas. */
  contextFor?: (canvas: HTMLCanvasElement) => Ctx2D | null;
}

function defaultContextFor(canvas: HTMLCanvasElement): Ctx2D | null {
  try {
    return canvas.getContext("2d") as Ctx2D | null;
  } catch {
    return null;
  }
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly controller: SessionController;
  private readonly doc: Document;
  private readonly contextFor: (c: HTMLCanvasElement) => Ctx2D | null;
  private readonly pageSize: number;
  private readonly querySize: number;

  private gallery!: HTMLElement;
  private rankPanel!: HTMLElement;
  private recPanel!: HTMLElement;
  private statusLine!: HTMLElement;
  private errorLine!: HTMLElement;
  private trainButton!: HTMLButtonElement;
  private rankButton!: HTMLButtonElement;
  private submitButton!: HTMLButtonElement;
  private closeButton!: HTMLButtonElement;
  private exportButton!: HTMLButtonElement;
  private objectivePicker!: HTMLSelectElement;
  private dimPicker!: HTMLSelectElement;

  lastExport: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    client: Client,
    private readonly opts: MountOptions = {},
  ) {
    this.controller = new SessionController(client);
    this.doc = root.ownerDocument;
    this.contextFor = opts.contextFor ?? defaultContextFor;
    this.pageSize = opts.pageSize ?? 30;
    this.querySize = opts.querySize ?? 5;
    this.buildSkeleton();
    this.controller.subscribe((s) => this.render(s));
  }

  async start(): Promise<void> {
    await this.controller.open();
    await this.controller.loadPage(this.pageSize);
  }

  private buildSkeleton(): void {
    const d = this.doc;
    this.root.replaceChildren();

    this.statusLine = el(d, "div", "status");
    this.errorLine = el(d, "div", "error");
    this.root.append(this.statusLine, this.errorLine);

    const toolbar = el(d, "div", "toolbar");
    this.closeButton = el(d, "button", "close-page", "Close page");
    this.closeButton.addEventListener("click", () => {
      void this.guard(async () => {
        await this.controller.closePage();
        await this.controller.loadPage(this.pageSize);
      });
    });

    this.objectivePicker = el(d, "select", "objective-picker");
    for (const o of ["clea", "clea_ae", "clea_vae", "ae", "vae", "random"]) {
      const opt = el(d, "option", undefined, o);
      opt.value = o;
      this.objectivePicker.append(opt);
    }
    this.dimPicker = el(d, "select", "dim-picker");
    for (const dim of [2, 4, 8, 16]) {
      const opt = el(d, "option", undefined, String(dim));
      opt.value = String(dim);
      this.dimPicker.append(opt);
    }
    this.dimPicker.value = "4";

    this.trainButton = el(d, "button", "train", "Train features");
    this.trainButton.addEventListener("click", () => {
      void this.guard(() =>
        this.controller.train({
          objective: this.objectivePicker.value,
          dim: Number(this.dimPicker.value),
        }),
      );
    });

    this.rankButton = el(d, "button", "rank-query", "New ranking query");
    this.rankButton.addEventListener("click", () => {
      void this.guard(() => this.controller.requestQuery(this.querySize));
    });

    this.exportButton = el(d, "button", "export", "Export log");
    this.exportButton.addEventListener("click", () => {
      void this.guard(async () => {
        this.lastExport = await this.controller.exportLog();
      });
    });

    toolbar.append(
      this.closeButton,
      this.objectivePicker,
      this.dimPicker,
      this.trainButton,
      this.rankButton,
      this.exportButton,
    );
    this.root.append(toolbar);

    this.gallery = el(d, "div", "gallery");
    this.rankPanel = el(d, "div", "rank-panel");
    this.submitButton = el(d, "button", "submit-ranking", "Submit ranking");
    this.submitButton.addEventListener("click", () => {
      void this.guard(() => this.controller.submitRanking());
    });
    this.recPanel = el(d, "div", "recommendations");
    this.root.append(this.gallery, this.rankPanel, this.submitButton, this.recPanel);
  }

  /** Run an action; API failures land in the inline error line (already
   * recorded by the controller), never in the console. */
  private async guard(fn: () => Promise<unknown>): Promise<void> {
    try {
      await fn();
    } catch {
      this.render(this.controller.getState());
    }
  }

  private card(b: { id: number; modality: string; summary: number[]; explored?: boolean }): HTMLElement {
    const d = this.doc;
    const card = el(d, "div", "card");
    card.dataset.behaviorId = String(b.id);
    const canvas = el(d, "canvas") as HTMLCanvasElement;
    canvas.width = 48;
    canvas.height = 32;
    const ctx = this.contextFor(canvas);
    if (ctx) {
      drawSummary(ctx, b.modality as never, b.summary, canvas.width, canvas.height);
    }
    card.append(canvas, el(d, "span", "badge", b.explored ? "explored" : ""));
    return card;
  }

  private render(s: State): void {
    const d = this.doc;
    this.statusLine.textContent =
      `session ${s.sessionId ?? "-"} | page ${s.pageIndex} | phase ${s.phase}` +
      ` | rounds ${s.rounds}`;
    this.errorLine.textContent = s.lastError ?? "";

    this.gallery.replaceChildren();
    for (const b of s.gallery) {
      const card = this.card(b);
      card.classList.toggle("explored", b.explored);
      card.addEventListener("click", () => {
        void this.guard(() => this.controller.explore(b.id));
      });
      this.gallery.append(card);
    }

    this.trainButton.disabled = s.phase === "training";
    this.rankButton.disabled = !this.controller.canRank;

    this.rankPanel.replaceChildren();
    if (s.ranking) {
      const placedSet = new Set(s.ranking.placed);
      const pool = el(d, "div", "rank-pool");
      for (let i = 0; i < s.ranking.query.length; i++) {
        if (placedSet.has(i)) continue;
        const b = s.ranking.query[i]!;
        const card = this.card(b);
        card.classList.add("rankable");
        card.draggable = true;
        card.addEventListener("click", () => {
          this.controller.place(i);
        });
        pool.append(card);
      }
      const slots = el(d, "ol", "rank-slots");
      s.ranking.placed.forEach((qi, pos) => {
        const b = s.ranking!.query[qi]!;
        const li = el(d, "li", "slot", `#${pos + 1} (worst first): behavior ${b.id}`);
        li.addEventListener("click", () => {
          this.controller.unplace(qi);
        });
        slots.append(li);
      });
      this.rankPanel.append(pool, slots);
    }
    this.submitButton.disabled = !this.controller.canSubmit;

    this.recPanel.replaceChildren();
    if (s.posterior) {
      this.recPanel.append(
        el(
          d,
          "div",
          "posterior",
          `comparisons ${s.posterior.comparisons} | spread ${s.posterior.sample_spread.toFixed(3)}`,
        ),
      );
    }
    for (const r of s.recommendations) {
      this.recPanel.append(
        el(d, "div", "rec", `behavior ${r.id}: ${r.posterior_mean_reward.toFixed(3)}`),
      );
    }
  }
}

export function mountApp(root: HTMLElement, client: Client, opts?: MountOptions): App {
  return new App(root, client, opts);
}
