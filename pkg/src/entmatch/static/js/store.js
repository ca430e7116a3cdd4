const PREFIX = "entmatch-labels";
/** Holds the annotator's not-yet-submitted choices for one batch.
 *
 * Every mutation is mirrored to browser storage under a key scoped to the
 * session and iteration, so a page reload restores exactly the choices that
 * were pending. The server stays the source of truth for submitted labels;
 * this store only bridges the gap between a click and a successful POST. */
export class LabelStore {
    sessionId;
    iteration;
    storage;
    choices = new Map();
    constructor(sessionId, iteration, storage) {
        this.sessionId = sessionId;
        this.iteration = iteration;
        this.storage = storage;
        this.load();
    }
    storageKey() {
        return `${PREFIX}:${this.sessionId}:${this.iteration}`;
    }
    load() {
        if (!this.storage)
            return;
        const raw = this.storage.getItem(this.storageKey());
        if (!raw)
            return;
        try {
            const parsed = JSON.parse(raw);
            if (parsed && typeof parsed === "object") {
                for (const [pairId, label] of Object.entries(parsed)) {
                    if (label === "match" || label === "non_match") {
                        this.choices.set(pairId, label);
                    }
                }
            }
        }
        catch {
            // stale or corrupt entry; start empty rather than fail
            this.storage.removeItem(this.storageKey());
        }
    }
    persist() {
        if (!this.storage)
            return;
        this.storage.setItem(this.storageKey(), JSON.stringify(Object.fromEntries(this.choices)));
    }
    /** Drops any choice whose pair is not in the served batch. Guards the
     * invariant that the client never submits a pair_id it was not served. */
    restrictTo(pairIds) {
        const allowed = new Set(pairIds);
        let changed = false;
        for (const pairId of [...this.choices.keys()]) {
            if (!allowed.has(pairId)) {
                this.choices.delete(pairId);
                changed = true;
            }
        }
        if (changed)
            this.persist();
    }
    set(pairId, label) {
        this.choices.set(pairId, label);
        this.persist();
    }
    get(pairId) {
        return this.choices.get(pairId);
    }
    delete(pairId) {
        if (this.choices.delete(pairId))
            this.persist();
    }
    get size() {
        return this.choices.size;
    }
    /** Pair ids from `pairIds` that have no local choice yet. */
    missing(pairIds) {
        return [...pairIds].filter((pairId) => !this.choices.has(pairId));
    }
    entries() {
        return [...this.choices.entries()].map(([pair_id, label]) => ({ pair_id, label }));
    }
    /** Clears the batch's choices after the server accepted them. */
    clear() {
        this.choices.clear();
        if (this.storage)
            this.storage.removeItem(this.storageKey());
    }
}
