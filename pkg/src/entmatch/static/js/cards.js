import { tokenDiff } from "./diff.js";
const BUCKET_TEXT = {
    likely_fp: "likely FP",
    likely_fn: "likely FN",
};
const LABEL_TEXT = {
    match: "match",
    non_match: "non-match",
};
/** Renders one card per served pair into `root`, replacing its contents.
 *
 * Attribute values are built with text nodes only, so record content can
 * never act as markup. Pairs the server reports as already labeled render
 * locked: their buttons are disabled and the stored label is shown. */
export function renderCards(root, pairs, store, cb) {
    root.textContent = "";
    pairs.forEach((pair, index) => {
        root.appendChild(buildCard(pair, index === 0, store, cb));
    });
}
function buildCard(pair, first, store, cb) {
    const doc = document;
    const card = doc.createElement("article");
    card.className = "card";
    card.dataset["pairId"] = pair.pair_id;
    // roving tabindex: exactly one card is reachable with Tab
    card.tabIndex = first ? 0 : -1;
    if (pair.label !== null)
        card.classList.add("locked");
    const header = doc.createElement("header");
    header.className = "card-header";
    const badge = doc.createElement("span");
    badge.className = `badge badge-${pair.bucket === "likely_fp" ? "fp" : "fn"}`;
    badge.textContent = BUCKET_TEXT[pair.bucket];
    header.appendChild(badge);
    const prob = doc.createElement("span");
    prob.className = "probability";
    prob.textContent = `p = ${pair.probability.toFixed(3)}`;
    header.appendChild(prob);
    const pid = doc.createElement("span");
    pid.className = "pair-id";
    pid.textContent = pair.pair_id;
    header.appendChild(pid);
    card.appendChild(header);
    card.appendChild(buildAttributeTable(pair));
    card.appendChild(buildLabelButtons(pair, store, cb));
    return card;
}
function buildAttributeTable(pair) {
    const doc = document;
    const table = doc.createElement("table");
    table.className = "attributes";
    const attributes = new Set([...Object.keys(pair.left), ...Object.keys(pair.right)]);
    for (const attribute of attributes) {
        const leftValue = pair.left[attribute] ?? "";
        const rightValue = pair.right[attribute] ?? "";
        const row = doc.createElement("tr");
        const name = doc.createElement("th");
        name.scope = "row";
        name.textContent = attribute;
        row.appendChild(name);
        if (leftValue === rightValue && leftValue !== "") {
            row.className = "same";
            row.appendChild(plainCell(leftValue, "left"));
            row.appendChild(plainCell(rightValue, "right"));
        }
        else {
            const diff = tokenDiff(leftValue, rightValue);
            row.appendChild(diffCell(leftValue, diff.left, "left"));
            row.appendChild(diffCell(rightValue, diff.right, "right"));
        }
        table.appendChild(row);
    }
    return table;
}
function plainCell(value, side) {
    const cell = document.createElement("td");
    cell.className = side;
    cell.textContent = value;
    return cell;
}
function diffCell(value, tokens, side) {
    const cell = document.createElement("td");
    cell.className = side;
    if (value === "") {
        const marker = document.createElement("span");
        marker.className = "null";
        marker.textContent = "NULL";
        cell.appendChild(marker);
        return cell;
    }
    tokens.forEach((token, index) => {
        if (index > 0)
            cell.appendChild(document.createTextNode(" "));
        if (token.common) {
            cell.appendChild(document.createTextNode(token.text));
        }
        else {
            const mark = document.createElement("mark");
            mark.textContent = token.text;
            cell.appendChild(mark);
        }
    });
    return cell;
}
function buildLabelButtons(pair, store, cb) {
    const footer = document.createElement("footer");
    footer.className = "card-actions";
    const chosen = pair.label ?? store.get(pair.pair_id);
    for (const label of ["match", "non_match"]) {
        const button = document.createElement("button");
        button.type = "button";
        button.className = "label-button";
        button.dataset["label"] = label;
        button.textContent = `${LABEL_TEXT[label]} (${label === "match" ? "m" : "n"})`;
        button.disabled = pair.label !== null;
        button.setAttribute("aria-pressed", chosen === label ? "true" : "false");
        if (chosen === label)
            button.classList.add("selected");
        button.addEventListener("click", () => cb.onLabel(pair.pair_id, label));
        footer.appendChild(button);
    }
    if (pair.label !== null) {
        const note = document.createElement("span");
        note.className = "locked-note";
        note.textContent = "submitted";
        footer.appendChild(note);
    }
    return footer;
}
/** Repaints the selection state of one card without rebuilding it. */
export function updateCardSelection(card, chosen) {
    for (const button of card.querySelectorAll("button.label-button")) {
        const active = button.dataset["label"] === chosen;
        button.classList.toggle("selected", active);
        button.setAttribute("aria-pressed", active ? "true" : "false");
    }
}
