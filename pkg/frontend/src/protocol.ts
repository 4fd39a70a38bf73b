// Wire protocol of the live-trial service. The client owns no dynamics:
// every y/e/preview value on screen came from a server frame.

export type SessionInfo = {
    session_id: string;
    subject_id: string;
    group: number;
    preview_s: number;
    trial_index: number;
    status: "idle" | "running" | "complete" | "divergent-complete";
    k: number;
    gaps: number;
    divergent: boolean;
    trials_total: number;
    hm_to_cm?: number;
    input_gain?: number;
};

export type TrialInfo = {
    trial_index: number;
    reference_seed: number;
    n: number;
    ts: number;
    preview_s: number;
};

export type InputFrame = { k: number; u: number };

export type OutputFrame = {
    k: number;
    y: number;
    e: number;
    r_now: number;
    preview: number[];
    divergent: boolean;
    duplicate?: boolean;
};

export type ServerMessage =
    | OutputFrame
    | { error: string }
    | { trial_complete: true; status: string };

export function isOutputFrame(msg: ServerMessage): msg is OutputFrame {
    return typeof (msg as OutputFrame).k === "number"
        && typeof (msg as OutputFrame).y === "number";
}

export function isTrialComplete(msg: ServerMessage): msg is { trial_complete: true; status: string } {
    return (msg as { trial_complete?: boolean }).trial_complete === true;
}

// Minimal structural interfaces so tests can inject fakes.
export interface WebSocketLike {
    send(data: string): void;
    close(): void;
    onmessage: ((ev: { data: string }) => void) | null;
    onclose: (() => void) | null;
    onerror: ((ev: unknown) => void) | null;
    onopen: (() => void) | null;
    readyState: number;
}

export type FetchLike = (url: string, init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
}) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export type WebSocketFactory = (url: string) => WebSocketLike;

export class ServiceError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

export class ServiceClient {
    constructor(
        private baseUrl: string,
        private fetchFn: FetchLike = fetch as unknown as FetchLike,
        private wsFactory: WebSocketFactory =
            (url) => new WebSocket(url) as unknown as WebSocketLike,
    ) { }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const resp = await this.fetchFn(this.baseUrl + path, {
            method,
            headers: body === undefined ? undefined : { "content-type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) {
            throw new ServiceError(resp.status, `${method} ${path} -> ${resp.status}`);
        }
        return await resp.json() as T;
    }

    createSession(subjectId: string, group: number): Promise<SessionInfo> {
        return this.request<SessionInfo>("POST", "/sessions", { subject_id: subjectId, group });
    }

    startTrial(sessionId: string): Promise<TrialInfo> {
        return this.request<TrialInfo>("POST", `/sessions/${sessionId}/trials`);
    }

    getState(sessionId: string): Promise<SessionInfo> {
        return this.request<SessionInfo>("GET", `/sessions/${sessionId}/state`);
    }

    openStream(sessionId: string): TrialStream {
        const wsUrl = this.baseUrl.replace(/^http/, "ws") + `/sessions/${sessionId}/stream`;
        return new TrialStream(this.wsFactory(wsUrl));
    }
}

// One trial's frame channel. Input frames go out as {k, u}; replies arrive
// in order on onFrame. Completion and errors surface as dedicated events.
export class TrialStream {
    onFrame: ((frame: OutputFrame) => void) | null = null;
    onComplete: ((status: string) => void) | null = null;
    onError: ((message: string) => void) | null = null;
    onClose: (() => void) | null = null;
    private opened: Promise<void>;

    constructor(private ws: WebSocketLike) {
        this.opened = new Promise((resolve) => {
            if (ws.readyState === 1) {
                resolve();
            } else {
                ws.onopen = () => resolve();
            }
        });
        ws.onmessage = (ev) => this.dispatch(JSON.parse(ev.data) as ServerMessage);
        ws.onclose = () => this.onClose?.();
    }

    private dispatch(msg: ServerMessage): void {
        if (isTrialComplete(msg)) {
            this.onComplete?.(msg.status);
        } else if (isOutputFrame(msg)) {
            this.onFrame?.(msg);
        } else {
            this.onError?.(msg.error);
        }
    }

    async ready(): Promise<void> {
        return this.opened;
    }

    send(frame: InputFrame): void {
        this.ws.send(JSON.stringify(frame));
    }

    close(): void {
        this.ws.close();
    }
}
