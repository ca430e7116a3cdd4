import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiError } from "../src/api.js";
import { App, type ClientLike } from "../src/app.js";
import type {
  AdvanceResponse,
  BatchResponse,
  IterationRow,
  LabelEntry,
  LabelValue,
  LabelsResponse,
  MetricsResponse,
  PairPayload,
  SessionState,
  StatusResponse,
} from "../src/types.js";

const SID = "fake-session";

function makePair(id: string, bucket: PairPayload["bucket"]): PairPayload {
  return {
    pair_id: id,
    left: { title: `left ${id}`, year: "1999" },
    right: { title: `right ${id}`, year: "1999" },
    probability: bucket === "likely_fp" ? 0.9 : 0.1,
    bucket,
    label: null,
  };
}

function makeBatch(iteration: number, size = 3): PairPayload[] {
  return Array.from({ length: size }, (_, i) =>
    makePair(`it${iteration}-p${i}`, i % 2 === 0 ? "likely_fp" : "likely_fn"),
  );
}

function historyRow(iteration: number): IterationRow {
  return {
    iteration,
    human_labels: 3,
    proxy_labels: 1,
    fp: 1,
    tp: 1,
    fn: 1,
    tn: 0,
    f1_on_labeled: 80 + iteration,
    pool_size: 100 - iteration,
    labeled_size: 3 * iteration,
    f1_trajectory: [70, 80 + iteration],
    shortfalls: {},
    test_f1: 75 + iteration,
  };
}

/** In-memory stand-in for the session endpoints, with the same state
 * machine the real server walks through. */
class FakeSession implements ClientLike {
  state: SessionState = "awaiting-labels";
  iteration = 1;
  total = 2;
  pairs: PairPayload[] = makeBatch(1);
  serverLabels = new Map<string, LabelValue>();
  history: IterationRow[] = [];
  submitted: LabelEntry[][] = [];
  failSubmitOnce: ApiError | null = null;
  failBatch: ApiError | null = null;
  trainingTicks = 0;
  trainingDuration = 2;

  private remaining(): number {
    return this.pairs.filter((p) => !this.serverLabels.has(p.pair_id)).length;
  }

  async status(): Promise<StatusResponse> {
    if (this.state === "training") {
      this.trainingTicks -= 1;
      if (this.trainingTicks <= 0) this.completeIteration();
    }
    const awaiting = this.state === "awaiting-labels";
    return {
      session_id: SID,
      dataset: "demo",
      state: this.state,
      iteration: this.iteration,
      iterations_total: this.total,
      pending: awaiting ? this.pairs.length : 0,
      remaining: awaiting ? this.remaining() : 0,
      submitted: awaiting ? this.pairs.length - this.remaining() : 0,
      pool_size: 100,
      labeled_size: this.history.length * 3,
      error: null,
    };
  }

  async batch(): Promise<BatchResponse> {
    if (this.failBatch) {
      const err = this.failBatch;
      this.failBatch = null;
      throw err;
    }
    if (this.state !== "awaiting-labels") {
      throw new ApiError(409, `no batch while ${this.state}`);
    }
    return {
      iteration: this.iteration,
      pairs: this.pairs.map((p) => ({ ...p, label: this.serverLabels.get(p.pair_id) ?? null })),
    };
  }

  async submitLabels(_sid: string, labels: LabelEntry[]): Promise<LabelsResponse> {
    if (this.failSubmitOnce) {
      const err = this.failSubmitOnce;
      this.failSubmitOnce = null;
      throw err;
    }
    for (const entry of labels) {
      if (!this.pairs.some((p) => p.pair_id === entry.pair_id)) {
        throw new ApiError(404, `unknown pair ${entry.pair_id}`);
      }
      if (this.serverLabels.has(entry.pair_id)) {
        throw new ApiError(409, `pair ${entry.pair_id} already has a label`);
      }
    }
    this.submitted.push(labels);
    for (const entry of labels) this.serverLabels.set(entry.pair_id, entry.label);
    return { accepted: labels.length, remaining: this.remaining() };
  }

  async advance(): Promise<AdvanceResponse> {
    if (this.state !== "awaiting-labels" || this.remaining() > 0) {
      throw new ApiError(409, "labels still missing");
    }
    this.state = "training";
    this.trainingTicks = this.trainingDuration;
    return { state: this.state, iteration: this.iteration };
  }

  async metrics(): Promise<MetricsResponse> {
    return { history: [...this.history] };
  }

  private completeIteration(): void {
    this.history.push(historyRow(this.iteration));
    this.serverLabels.clear();
    this.iteration += 1;
    if (this.iteration > this.total) {
      this.state = "finished";
      this.pairs = [];
    } else {
      this.state = "awaiting-labels";
      this.pairs = makeBatch(this.iteration);
    }
  }
}

function makeApp(fake: FakeSession) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const app = new App(root, fake, SID, { pollIntervalMs: 5, storage: localStorage });
  return { root, app };
}

function labelAll(app: App, root: HTMLElement): void {
  for (const card of root.querySelectorAll<HTMLElement>(".card")) {
    app.choose(card.dataset["pairId"]!, "match");
  }
}

function bannerText(root: HTMLElement): string {
  const banner = root.querySelector<HTMLElement>(".banner");
  return banner && !banner.hidden ? (banner.textContent ?? "") : "";
}

describe("App", () => {
  beforeEach(() => {
    localStorage.clear();
    document.body.textContent = "";
  });

  it("renders the batch, status panel, and empty metrics on start", async () => {
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();

    expect(root.querySelectorAll(".card").length).toBe(3);
    expect(root.querySelector(".panel-state .panel-value")!.textContent).toBe("awaiting-labels");
    expect(root.querySelector(".panel-iteration .panel-value")!.textContent).toBe("1 / 2");
    expect(root.querySelectorAll(".metrics-row").length).toBe(0);
    expect(root.querySelector<HTMLElement>(".summary")!.hidden).toBe(true);
  });

  it("keeps submit disabled until every card has a choice", async () => {
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();
    const submit = root.querySelector<HTMLButtonElement>(".submit-button")!;

    expect(submit.disabled).toBe(true);
    expect(root.querySelector(".missing-count")!.textContent).toBe("3 of 3 unlabeled");

    app.choose("it1-p0", "match");
    app.choose("it1-p1", "non_match");
    expect(submit.disabled).toBe(true);
    expect(root.querySelector(".missing-count")!.textContent).toBe("1 of 3 unlabeled");

    app.choose("it1-p2", "match");
    expect(submit.disabled).toBe(false);
    expect(root.querySelector(".missing-count")!.textContent).toBe("all cards labeled");
  });

  it("submits all choices in a single POST and locks the cards", async () => {
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();
    labelAll(app, root);
    await app.submit();

    expect(fake.submitted.length).toBe(1);
    expect(fake.submitted[0]!.length).toBe(3);
    const cards = [...root.querySelectorAll<HTMLElement>(".card")];
    expect(cards.every((c) => c.classList.contains("locked"))).toBe(true);
    expect(root.querySelector<HTMLButtonElement>(".submit-button")!.disabled).toBe(true);
    expect(root.querySelector<HTMLButtonElement>(".advance-button")!.disabled).toBe(false);
  });

  it("never submits a pair id that was not served", async () => {
    localStorage.setItem(
      `entmatch-labels:${SID}:1`,
      JSON.stringify({ "stale-pair": "match", "it1-p0": "non_match" }),
    );
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();

    app.choose("it1-p1", "match");
    app.choose("it1-p2", "match");
    await app.submit();

    expect(fake.submitted.length).toBe(1);
    const ids = fake.submitted[0]!.map((e) => e.pair_id).sort();
    expect(ids).toEqual(["it1-p0", "it1-p1", "it1-p2"]);
    expect(bannerText(root)).toBe("");
  });

  it("shows a banner instead of cards when the batch is refused", async () => {
    const fake = new FakeSession();
    fake.failBatch = new ApiError(409, "no batch while training");
    const { root, app } = makeApp(fake);
    await app.start();

    expect(root.querySelectorAll(".card").length).toBe(0);
    expect(bannerText(root)).toContain("no batch while training");
  });

  it("surfaces a session error through the banner", async () => {
    const fake = new FakeSession();
    fake.state = "idle";
    const fakeStatus = fake.status.bind(fake);
    fake.status = async () => ({ ...(await fakeStatus()), error: "checkpoint missing" });
    const { root, app } = makeApp(fake);
    await app.start();

    expect(bannerText(root)).toContain("checkpoint missing");
    expect(root.querySelectorAll(".card").length).toBe(0);
  });

  it("keeps every choice and offers retry when submit cannot reach the server", async () => {
    const fake = new FakeSession();
    fake.failSubmitOnce = new ApiError(0, "fetch failed");
    const { root, app } = makeApp(fake);
    await app.start();
    labelAll(app, root);
    await app.submit();

    expect(fake.submitted.length).toBe(0);
    expect(bannerText(root)).toContain("labels are kept locally");
    const stored = JSON.parse(localStorage.getItem(`entmatch-labels:${SID}:1`)!) as Record<string, string>;
    expect(Object.keys(stored).length).toBe(3);

    root.querySelector<HTMLButtonElement>(".retry-button")!.click();
    await vi.waitFor(() => {
      expect(fake.submitted.length).toBe(1);
    });
    await vi.waitFor(() => {
      const cards = [...root.querySelectorAll<HTMLElement>(".card")];
      expect(cards.length).toBe(3);
      expect(cards.every((c) => c.classList.contains("locked"))).toBe(true);
    });
  });

  it("reloads server truth and explains a rejected submit", async () => {
    const fake = new FakeSession();
    fake.failSubmitOnce = new ApiError(409, "pair it1-p0 already has a label");
    const { root, app } = makeApp(fake);
    await app.start();
    labelAll(app, root);
    await app.submit();

    expect(bannerText(root)).toContain("submit rejected");
    expect(root.querySelectorAll(".card").length).toBe(3);
  });

  it("restores unsubmitted choices after a reload", async () => {
    const fake = new FakeSession();
    const first = makeApp(fake);
    await first.app.start();
    labelAll(first.app, first.root);
    first.app.dispose();
    first.root.remove();

    const second = makeApp(fake);
    await second.app.start();
    const selected = second.root.querySelectorAll('button.label-button[aria-pressed="true"]');
    expect(selected.length).toBe(3);
    expect(second.root.querySelector<HTMLButtonElement>(".submit-button")!.disabled).toBe(false);
    expect(fake.submitted.length).toBe(0);
  });

  it("advances through training into the next iteration", async () => {
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();
    labelAll(app, root);
    await app.submit();
    await app.advance();

    expect(fake.history.length).toBe(1);
    expect(root.querySelector(".panel-iteration .panel-value")!.textContent).toBe("2 / 2");
    expect(root.querySelectorAll(".metrics-row").length).toBe(1);
    const cards = [...root.querySelectorAll<HTMLElement>(".card")];
    expect(cards.length).toBe(3);
    expect(cards.map((c) => c.dataset["pairId"])).toEqual(["it2-p0", "it2-p1", "it2-p2"]);
    expect(cards.every((c) => !c.classList.contains("locked"))).toBe(true);
  });

  it("shows the training banner while the server trains", async () => {
    const fake = new FakeSession();
    fake.trainingDuration = 1000;
    const { root, app } = makeApp(fake);
    await app.start();
    labelAll(app, root);
    await app.submit();
    void app.advance();

    await vi.waitFor(() => {
      expect(bannerText(root)).toContain("training in progress");
    });
    expect(root.querySelectorAll(".card").length).toBe(0);
    fake.trainingTicks = 1;
    await vi.waitFor(() => {
      expect(root.querySelectorAll(".card").length).toBe(3);
    });
    app.dispose();
  });

  it("ends on a summary screen with one metrics row per iteration", async () => {
    const fake = new FakeSession();
    const { root, app } = makeApp(fake);
    await app.start();

    for (const expected of [1, 2]) {
      labelAll(app, root);
      await app.submit();
      await app.advance();
      expect(fake.history.length).toBe(expected);
    }

    const summary = root.querySelector<HTMLElement>(".summary")!;
    expect(summary.hidden).toBe(false);
    expect(summary.textContent).toContain("Session finished");
    expect(summary.textContent).toContain("2 iterations completed");
    expect(root.querySelectorAll(".metrics-row").length).toBe(2);
    expect(root.querySelectorAll(".card").length).toBe(0);
    expect(root.querySelector<HTMLButtonElement>(".submit-button")!.disabled).toBe(true);
    expect(root.querySelector<HTMLButtonElement>(".advance-button")!.disabled).toBe(true);
    expect(root.querySelector(".panel-state .panel-value")!.textContent).toBe("finished");
  });
});
