import type { LabelValue } from "./types.js";

export interface KeyboardCallbacks {
  onLabel: (card: HTMLElement, label: LabelValue) => void;
}

const NEXT_KEYS = new Set(["ArrowDown", "ArrowRight", "j"]);
const PREV_KEYS = new Set(["ArrowUp", "ArrowLeft", "k"]);

/** Wires batch-wide keyboard control onto the card container.
 *
 * Arrow keys (or j/k) move focus between cards with a roving tabindex,
 * "m" and "n" label the focused card, and Enter or Space activates a
 * focused button. Returns a function that detaches the listener. */
export function attachKeyboard(container: HTMLElement, cb: KeyboardCallbacks): () => void {
  const handler = (event: KeyboardEvent) => {
    const cards = [...container.querySelectorAll<HTMLElement>(".card")];
    if (cards.length === 0) return;

    const target = event.target instanceof HTMLElement ? event.target : null;
    if (target && isTextInput(target)) return;

    if (NEXT_KEYS.has(event.key) || PREV_KEYS.has(event.key)) {
      event.preventDefault();
      const index = currentIndex(cards, target);
      const step = NEXT_KEYS.has(event.key) ? 1 : -1;
      const next = Math.min(cards.length - 1, Math.max(0, index + step));
      focusCard(cards, next);
      return;
    }

    if (event.key === "m" || event.key === "n") {
      const card = currentCard(cards, target);
      if (card && !card.classList.contains("locked")) {
        event.preventDefault();
        cb.onLabel(card, event.key === "m" ? "match" : "non_match");
      }
      return;
    }

    if ((event.key === "Enter" || event.key === " ") && target instanceof HTMLButtonElement) {
      // jsdom and some browsers do not synthesize click on keydown
      event.preventDefault();
      if (!target.disabled) target.click();
    }
  };

  container.addEventListener("keydown", handler);
  return () => container.removeEventListener("keydown", handler);
}

function isTextInput(el: HTMLElement): boolean {
  return el instanceof HTMLInputElement || el instanceof HTMLTextAreaElement;
}

function currentCard(cards: HTMLElement[], target: HTMLElement | null): HTMLElement | null {
  const fromTarget = target?.closest<HTMLElement>(".card");
  if (fromTarget && cards.includes(fromTarget)) return fromTarget;
  const active = document.activeElement;
  const fromActive = active instanceof HTMLElement ? active.closest<HTMLElement>(".card") : null;
  if (fromActive && cards.includes(fromActive)) return fromActive;
  return cards.find((c) => c.tabIndex === 0) ?? cards[0] ?? null;
}

function currentIndex(cards: HTMLElement[], target: HTMLElement | null): number {
  const card = currentCard(cards, target);
  return card ? cards.indexOf(card) : 0;
}

function focusCard(cards: HTMLElement[], index: number): void {
  cards.forEach((card, i) => {
    card.tabIndex = i === index ? 0 : -1;
  });
  cards[index]?.focus();
}
