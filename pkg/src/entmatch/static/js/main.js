// Entry point for the served page: reads the session id (and optional
// bearer token) from the URL fragment or a small join form, then hands
// control to App. The token is asked for once and kept per session.
import { ApiClient } from "./api.js";
import { App } from "./app.js";
const TOKEN_PREFIX = "entmatch-token";
function parseHash(hash) {
    const params = new URLSearchParams(hash.replace(/^#/, ""));
    return { session: params.get("session"), token: params.get("token") };
}
function storedToken(sessionId) {
    try {
        return localStorage.getItem(`${TOKEN_PREFIX}:${sessionId}`);
    }
    catch {
        return null;
    }
}
function rememberToken(sessionId, token) {
    try {
        localStorage.setItem(`${TOKEN_PREFIX}:${sessionId}`, token);
    }
    catch {
        // private browsing; the token just has to be re-entered after reload
    }
}
function launch(root, sessionId, token) {
    if (token)
        rememberToken(sessionId, token);
    const client = new ApiClient("", token ?? storedToken(sessionId));
    const app = new App(root, client, sessionId);
    void app.start();
}
function renderJoinForm(root) {
    root.textContent = "";
    const form = document.createElement("form");
    form.className = "join-form";
    const title = document.createElement("h1");
    title.textContent = "Join a labeling session";
    form.appendChild(title);
    const sessionInput = document.createElement("input");
    sessionInput.name = "session";
    sessionInput.placeholder = "session id";
    sessionInput.required = true;
    form.appendChild(sessionInput);
    const tokenInput = document.createElement("input");
    tokenInput.name = "token";
    tokenInput.placeholder = "bearer token (if the server uses one)";
    tokenInput.type = "password";
    form.appendChild(tokenInput);
    const go = document.createElement("button");
    go.type = "submit";
    go.textContent = "Open session";
    form.appendChild(go);
    form.addEventListener("submit", (event) => {
        event.preventDefault();
        const sessionId = sessionInput.value.trim();
        if (!sessionId)
            return;
        const token = tokenInput.value.trim() || null;
        location.hash = `session=${encodeURIComponent(sessionId)}`;
        launch(root, sessionId, token);
    });
    root.appendChild(form);
}
export function boot(root) {
    const { session, token } = parseHash(location.hash);
    if (session) {
        launch(root, session, token);
    }
    else {
        renderJoinForm(root);
    }
}
const rootEl = document.getElementById("app");
if (rootEl)
    boot(rootEl);
