import type { LabelEntry, LabelValue } from "./types.js";

const PREFIX = "entmatch-labels";

/** Holds the annotator's not-yet-submitted choices for one batch.
 *
 * Every mutation is mirrored to browser storage under a key scoped to the
 * session and iteration, so a page reload restores exactly the choices that
 * were pending. The server stays the source of truth for submitted labels;
 * this store only bridges the gap between a click and a successful POST. */
export class LabelStore {
  private choices = new Map<string, LabelValue>();

  constructor(
    readonly sessionId: string,
    readonly iteration: number,
    private readonly storage: Storage | null,
  ) {
    this.load();
  }

  private storageKey(): string {
    return `${PREFIX}:${this.sessionId}:${this.iteration}`;
  }

  private load(): void {
    if (!this.storage) return;
    const raw = this.storage.getItem(this.storageKey());
    if (!raw) return;
    try {
      const parsed: unknown = JSON.parse(raw);
      if (parsed && typeof parsed === "object") {
        for (const [pairId, label] of Object.entries(parsed)) {
          if (label === "match" || label === "non_match") {
            this.choices.set(pairId, label);
          }
        }
      }
    } catch {
      // stale or corrupt entry; start empty rather than fail
      this.storage.removeItem(this.storageKey());
    }
  }

  private persist(): void {
    if (!this.storage) return;
    this.storage.setItem(this.storageKey(), JSON.stringify(Object.fromEntries(this.choices)));
  }

  /** Drops any choice whose pair is not in the served batch. Guards the
   * invariant that the client never submits a pair_id it was not served. */
  restrictTo(pairIds: Iterable<string>): void {
    const allowed = new Set(pairIds);
    let changed = false;
    for (const pairId of [...this.choices.keys()]) {
      if (!allowed.has(pairId)) {
        this.choices.delete(pairId);
        changed = true;
      }
    }
    if (changed) this.persist();
  }

  set(pairId: string, label: LabelValue): void {
    this.choices.set(pairId, label);
    this.persist();
  }

  get(pairId: string): LabelValue | undefined {
    return this.choices.get(pairId);
  }

  delete(pairId: string): void {
    if (this.choices.delete(pairId)) this.persist();
  }

  get size(): number {
    return this.choices.size;
  }

  /** Pair ids from `pairIds` that have no local choice yet. */
  missing(pairIds: Iterable<string>): string[] {
    return [...pairIds].filter((pairId) => !this.choices.has(pairId));
  }

  entries(): LabelEntry[] {
    return [...this.choices.entries()].map(([pair_id, label]) => ({ pair_id, label }));
  }

  /** Clears the batch's choices after the server accepted them. */
  clear(): void {
    this.choices.clear();
    if (this.storage) this.storage.removeItem(this.storageKey());
  }
}
