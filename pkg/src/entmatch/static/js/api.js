/** Error raised for any failed request. `status` is 0 when the request never
 * reached the server (connection refused, offline), so callers can tell a
 * transport failure apart from a rejected one. */
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
}
export class ApiClient {
    base;
    token;
    fetchFn;
    constructor(base, token = null, fetchFn = (input, init) => fetch(input, init)) {
        this.base = base;
        this.token = token;
        this.fetchFn = fetchFn;
    }
    setToken(token) {
        this.token = token;
    }
    batch(sessionId) {
        return this.request("GET", `/sessions/${sessionId}/batch`);
    }
    submitLabels(sessionId, labels) {
        return this.request("POST", `/sessions/${sessionId}/labels`, { labels });
    }
    advance(sessionId) {
        return this.request("POST", `/sessions/${sessionId}/advance`);
    }
    status(sessionId) {
        return this.request("GET", `/sessions/${sessionId}/status`);
    }
    metrics(sessionId) {
        return this.request("GET", `/sessions/${sessionId}/metrics`);
    }
    async request(method, path, body) {
        const headers = {};
        if (this.token)
            headers["authorization"] = `Bearer ${this.token}`;
        if (body !== undefined)
            headers["content-type"] = "application/json";
        let res;
        try {
            res = await this.fetchFn(this.base + path, {
                method,
                headers,
                body: body === undefined ? undefined : JSON.stringify(body),
            });
        }
        catch (err) {
            throw new ApiError(0, err instanceof Error ? err.message : String(err));
        }
        if (!res.ok) {
            throw new ApiError(res.status, await extractDetail(res));
        }
        return (await res.json());
    }
}
async function extractDetail(res) {
    try {
        const payload = await res.json();
        if (payload && typeof payload === "object" && "detail" in payload) {
            const detail = payload.detail;
            if (typeof detail === "string")
                return detail;
            return JSON.stringify(detail);
        }
        return JSON.stringify(payload);
    }
    catch {
        return `request failed with status ${res.status}`;
    }
}
