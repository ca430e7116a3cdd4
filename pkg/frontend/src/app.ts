import { ApiError, type ApiClient } from "./api.js";
import { renderCards, updateCardSelection } from "./cards.js";
import { attachKeyboard } from "./keyboard.js";
import { LabelStore } from "./store.js";
import type { BatchResponse, IterationRow, LabelValue, StatusResponse } from "./types.js";

export type ClientLike = Pick<ApiClient, "batch" | "submitLabels" | "advance" | "status" | "metrics">;

export interface AppOptions {
  /** Delay between status polls while the server trains. */
  pollIntervalMs?: number;
  /** Where unsubmitted choices are persisted; null disables persistence. */
  storage?: Storage | null;
}

interface Banner {
  kind: "info" | "error";
  text: string;
  retry: (() => void) | null;
}

/** One labeling session screen: status header, metrics history, the served
 * batch as cards, and submit/advance controls.
 *
 * The server owns all submitted labels; the app only keeps the choices the
 * annotator has made since the last successful submit, mirrored to browser
 * storage so a reload lands back in the same spot. */
export class App {
  private store: LabelStore;
  private batch: BatchResponse | null = null;
  private sessionStatus: StatusResponse | null = null;
  private history: IterationRow[] = [];
  private banner: Banner | null = null;
  private submitting = false;
  private polling = false;
  private disposed = false;
  private detachKeyboard: (() => void) | null = null;

  private readonly pollIntervalMs: number;
  private readonly storage: Storage | null;

  private bannerEl!: HTMLElement;
  private panelEl!: HTMLElement;
  private summaryEl!: HTMLElement;
  private cardsEl!: HTMLElement;
  private missingEl!: HTMLElement;
  private submitEl!: HTMLButtonElement;
  private advanceEl!: HTMLButtonElement;
  private metricsEl!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ClientLike,
    private readonly sessionId: string,
    opts: AppOptions = {},
  ) {
    this.pollIntervalMs = opts.pollIntervalMs ?? 1500;
    this.storage = opts.storage === undefined ? defaultStorage() : opts.storage;
    this.store = new LabelStore(sessionId, 0, this.storage);
  }

  async start(): Promise<void> {
    this.buildSkeleton();
    this.detachKeyboard = attachKeyboard(this.root, {
      onLabel: (card, label) => {
        const pairId = card.dataset["pairId"];
        if (pairId) this.choose(pairId, label);
      },
    });
    await this.refresh();
  }

  dispose(): void {
    this.disposed = true;
    this.detachKeyboard?.();
    this.detachKeyboard = null;
  }

  /** Reloads status, metrics, and (when labels are awaited) the batch. */
  async refresh(): Promise<void> {
    try {
      this.sessionStatus = await this.client.status(this.sessionId);
      this.history = (await this.client.metrics(this.sessionId)).history;
    } catch (err) {
      this.banner = {
        kind: "error",
        text: `cannot reach the session: ${messageOf(err)}`,
        retry: () => void this.refresh(),
      };
      this.render();
      return;
    }

    const status = this.sessionStatus;
    if (this.store.iteration !== status.iteration) {
      this.store = new LabelStore(this.sessionId, status.iteration, this.storage);
    }

    this.banner = null;
    this.batch = null;
    if (status.state === "awaiting-labels") {
      try {
        this.batch = await this.client.batch(this.sessionId);
        this.store.restrictTo(this.batch.pairs.map((p) => p.pair_id));
      } catch (err) {
        // a 409 means the session moved on; show why instead of cards
        this.banner = { kind: "info", text: messageOf(err), retry: null };
      }
    } else if (status.state === "training") {
      this.banner = { kind: "info", text: "training in progress", retry: null };
      void this.watchTraining();
    } else if (status.state === "idle" && status.error) {
      this.banner = { kind: "error", text: status.error, retry: null };
    }
    this.render();
  }

  /** Records a choice locally; nothing reaches the server until submit. */
  choose(pairId: string, label: LabelValue): void {
    const pair = this.batch?.pairs.find((p) => p.pair_id === pairId);
    if (!pair || pair.label !== null) return;
    this.store.set(pairId, label);
    const card = this.cardsEl.querySelector<HTMLElement>(`[data-pair-id="${cssEscape(pairId)}"]`);
    if (card) updateCardSelection(card, label);
    this.updateControls();
  }

  /** Sends every pending choice in one POST. Keeps all choices on failure. */
  async submit(): Promise<void> {
    if (!this.batch || this.submitting) return;
    const served = new Set(this.batch.pairs.filter((p) => p.label === null).map((p) => p.pair_id));
    const entries = this.store.entries().filter((e) => served.has(e.pair_id));
    if (entries.length === 0 || this.store.missing(served).length > 0) return;

    this.submitting = true;
    this.updateControls();
    try {
      await this.client.submitLabels(this.sessionId, entries);
      this.store.clear();
      this.banner = null;
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 0) {
        this.banner = {
          kind: "error",
          text: `submit failed: ${err.message}. Your labels are kept locally.`,
          retry: () => void this.submit(),
        };
        this.render();
      } else {
        // conflict or stale view; reload, then explain what was rejected
        const text = `submit rejected: ${messageOf(err)}`;
        await this.refresh();
        if (!this.banner) {
          this.banner = { kind: "error", text, retry: null };
          this.renderBanner();
        }
      }
    } finally {
      this.submitting = false;
      this.updateControls();
    }
  }

  /** Asks the server to train the next iteration, then polls until done. */
  async advance(): Promise<void> {
    try {
      await this.client.advance(this.sessionId);
    } catch (err) {
      this.banner = { kind: "error", text: `advance rejected: ${messageOf(err)}`, retry: null };
      this.render();
      return;
    }
    this.banner = { kind: "info", text: "training in progress", retry: null };
    this.batch = null;
    this.render();
    await this.watchTraining();
  }

  private async watchTraining(): Promise<void> {
    if (this.polling) return;
    this.polling = true;
    try {
      while (!this.disposed) {
        await sleep(this.pollIntervalMs);
        const status = await this.client.status(this.sessionId);
        if (status.state !== "training") break;
      }
    } catch {
      // transient poll failure; the refresh below settles the view
    } finally {
      this.polling = false;
    }
    if (!this.disposed) await this.refresh();
  }

  private buildSkeleton(): void {
    this.root.textContent = "";
    this.bannerEl = el("div", "banner");
    this.bannerEl.hidden = true;
    this.panelEl = el("section", "session-panel");
    this.summaryEl = el("section", "summary");
    this.summaryEl.hidden = true;
    this.cardsEl = el("section", "cards");
    this.cardsEl.setAttribute("aria-label", "pairs to label");

    const controls = el("div", "controls");
    this.missingEl = el("span", "missing-count");
    this.submitEl = el("button", "submit-button") as HTMLButtonElement;
    this.submitEl.type = "button";
    this.submitEl.textContent = "Submit labels";
    this.submitEl.addEventListener("click", () => void this.submit());
    this.advanceEl = el("button", "advance-button") as HTMLButtonElement;
    this.advanceEl.type = "button";
    this.advanceEl.textContent = "Advance";
    this.advanceEl.addEventListener("click", () => void this.advance());
    controls.append(this.missingEl, this.submitEl, this.advanceEl);

    this.metricsEl = el("section", "metrics");

    this.root.append(this.bannerEl, this.panelEl, this.summaryEl, this.cardsEl, controls, this.metricsEl);
  }

  private render(): void {
    this.renderBanner();
    this.renderPanel();
    this.renderSummary();
    this.renderCardsSection();
    this.renderMetrics();
    this.updateControls();
  }

  private renderBanner(): void {
    this.bannerEl.textContent = "";
    if (!this.banner) {
      this.bannerEl.hidden = true;
      return;
    }
    this.bannerEl.hidden = false;
    this.bannerEl.className = `banner banner-${this.banner.kind}`;
    this.bannerEl.appendChild(document.createTextNode(this.banner.text));
    if (this.banner.retry) {
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry-button";
      retry.textContent = "Retry";
      const action = this.banner.retry;
      retry.addEventListener("click", action);
      this.bannerEl.appendChild(retry);
    }
  }

  private renderPanel(): void {
    this.panelEl.textContent = "";
    const status = this.sessionStatus;
    if (!status) return;
    const bits: Array<[string, string]> = [
      ["session", status.session_id],
      ["dataset", status.dataset],
      ["state", status.state],
      ["iteration", `${Math.min(status.iteration, status.iterations_total)} / ${status.iterations_total}`],
      ["pending", String(status.pending)],
      ["labeled", String(status.labeled_size)],
      ["pool", String(status.pool_size)],
    ];
    for (const [name, value] of bits) {
      const item = el("span", `panel-item panel-${name}`);
      const label = el("span", "panel-label");
      label.textContent = name;
      const val = el("span", "panel-value");
      val.textContent = value;
      item.append(label, val);
      this.panelEl.appendChild(item);
    }
  }

  private renderSummary(): void {
    const status = this.sessionStatus;
    const finished = status?.state === "finished";
    this.summaryEl.hidden = !finished;
    this.summaryEl.textContent = "";
    if (!finished || !status) return;

    const title = el("h2", "summary-title");
    title.textContent = "Session finished";
    this.summaryEl.appendChild(title);

    const totalHuman = this.history.reduce((acc, row) => acc + row.human_labels, 0);
    const totalProxy = this.history.reduce((acc, row) => acc + row.proxy_labels, 0);
    const last = this.history[this.history.length - 1];
    const lines = [
      `${status.iterations_total} iterations completed`,
      `${totalHuman} human labels, ${totalProxy} proxy labels`,
      last?.test_f1 != null ? `final test F1 ${last.test_f1.toFixed(2)}` : `final F1 on labeled ${last ? last.f1_on_labeled.toFixed(2) : "n/a"}`,
    ];
    for (const text of lines) {
      const p = el("p", "summary-line");
      p.textContent = text;
      this.summaryEl.appendChild(p);
    }
  }

  private renderCardsSection(): void {
    if (!this.batch || this.sessionStatus?.state !== "awaiting-labels") {
      this.cardsEl.textContent = "";
      return;
    }
    renderCards(this.cardsEl, this.batch.pairs, this.store, {
      onLabel: (pairId, label) => this.choose(pairId, label),
    });
  }

  private renderMetrics(): void {
    this.metricsEl.textContent = "";
    const heading = el("h2", "metrics-title");
    heading.textContent = "Iterations";
    this.metricsEl.appendChild(heading);

    const table = document.createElement("table");
    table.className = "metrics-table";
    const head = document.createElement("tr");
    for (const name of ["iter", "human", "proxy", "fp", "tp", "fn", "tn", "f1 labeled", "test f1"]) {
      const th = document.createElement("th");
      th.textContent = name;
      head.appendChild(th);
    }
    table.appendChild(head);

    for (const row of this.history) {
      const tr = document.createElement("tr");
      tr.className = "metrics-row";
      const cells = [
        String(row.iteration),
        String(row.human_labels),
        String(row.proxy_labels),
        fmtCount(row.fp),
        fmtCount(row.tp),
        fmtCount(row.fn),
        fmtCount(row.tn),
        row.f1_on_labeled.toFixed(2),
        row.test_f1 == null ? "-" : row.test_f1.toFixed(2),
      ];
      for (const value of cells) {
        const td = document.createElement("td");
        td.textContent = value;
        tr.appendChild(td);
      }
      table.appendChild(tr);
    }
    this.metricsEl.appendChild(table);
  }

  private updateControls(): void {
    const status = this.sessionStatus;
    const awaiting = status?.state === "awaiting-labels" && this.batch !== null;
    const served = this.batch ? this.batch.pairs.filter((p) => p.label === null).map((p) => p.pair_id) : [];
    const missing = this.store.missing(served);
    const pending = this.store.entries().filter((e) => served.includes(e.pair_id)).length;

    if (!awaiting) {
      this.missingEl.textContent = "";
      this.submitEl.disabled = true;
      this.advanceEl.disabled = true;
      return;
    }
    this.missingEl.textContent =
      served.length === 0
        ? "nothing to label"
        : missing.length > 0
          ? `${missing.length} of ${served.length} unlabeled`
          : pending > 0
            ? "all cards labeled"
            : "labels submitted";
    this.submitEl.disabled = this.submitting || pending === 0 || missing.length > 0;
    this.advanceEl.disabled = status!.remaining !== 0;
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function fmtCount(value: number | null): string {
  return value == null ? "-" : String(value);
}

function messageOf(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function defaultStorage(): Storage | null {
  try {
    return typeof localStorage === "undefined" ? null : localStorage;
  } catch {
    return null;
  }
}

function cssEscape(value: string): string {
  const css = (globalThis as { CSS?: { escape?: (v: string) => string } }).CSS;
  if (css?.escape) return css.escape(value);
  return value.replace(/["\\\]]/g, "\\$&");
}
