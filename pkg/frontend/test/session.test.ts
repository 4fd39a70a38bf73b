import { describe, expect, it } from "vitest";

import {
    FetchLike,
    isOutputFrame,
    OutputFrame,
    ServiceClient,
    WebSocketLike,
} from "../src/protocol.js";
import { SessionFlow, TRIALS_PER_BLOCK } from "../src/session.js";

class FakeSocket implements WebSocketLike {
    onmessage: ((ev: { data: string }) => void) | null = null;
    onclose: (() => void) | null = null;
    onerror: ((ev: unknown) => void) | null = null;
    onopen: (() => void) | null = null;
    readyState = 1;
    sent: string[] = [];

    send(data: string): void {
        this.sent.push(data);
    }

    close(): void {
        this.readyState = 3;
        this.onclose?.();
    }

    pushServer(msg: unknown): void {
        this.onmessage?.({ data: JSON.stringify(msg) });
    }
}

// Minimal in-memory stand-in for the live service: same endpoints, same
// frame schema, trivial dynamics (y echoes 0.1 * u).
class FakeService {
    trialIndex = 1;
    status = "idle";
    k = 0;
    n: number;
    sockets: FakeSocket[] = [];

    constructor(public trialsTotal = 40, n = 20) {
        this.n = n;
    }

    fetch: FetchLike = async (url, init) => {
        const method = init?.method ?? "GET";
        const json = (body: unknown) => Promise.resolve(body);
        if (method === "POST" && url.endsWith("/sessions")) {
            return { ok: true, status: 201, json: () => json(this.sessionDoc()) };
        }
        if (method === "POST" && url.endsWith("/trials")) {
            if (this.status === "running" || this.trialIndex > this.trialsTotal) {
                return { ok: false, status: 409, json: () => json({ detail: "busy" }) };
            }
            this.status = "running";
            this.k = 0;
            return {
                ok: true, status: 200, json: () => json({
                    trial_index: this.trialIndex,
                    reference_seed: 1000 + this.trialIndex,
                    n: this.n,
                    ts: 0.02,
                    preview_s: 1.0,
                }),
            };
        }
        if (method === "GET" && url.includes("/state")) {
            return { ok: true, status: 200, json: () => json(this.sessionDoc()) };
        }
        return { ok: false, status: 404, json: () => json({}) };
    };

    wsFactory = (): FakeSocket => {
        const ws = new FakeSocket();
        this.sockets.push(ws);
        ws.send = (data: string) => {
            ws.sent.push(data);
            const frame = JSON.parse(data) as { k: number; u: number };
            this.k = frame.k;
            ws.pushServer({
                k: frame.k,
                y: 0.1 * frame.u,
                e: -0.1 * frame.u,
                r_now: 0,
                preview: [0, 0.1],
                divergent: false,
            });
            if (frame.k >= this.n) {
                this.trialIndex += 1;
                this.status = this.trialIndex > this.trialsTotal ? "complete" : "idle";
                ws.pushServer({ trial_complete: true, status: this.status });
            }
        };
        queueMicrotask(() => ws.onopen?.());
        return ws;
    };

    private sessionDoc() {
        return {
            session_id: "abc",
            subject_id: "s01",
            group: 3,
            preview_s: 1.0,
            trial_index: this.trialIndex,
            status: this.status,
            k: this.k,
            gaps: 0,
            divergent: false,
            trials_total: this.trialsTotal,
        };
    }
}

function makeFlow(service: FakeService) {
    const client = new ServiceClient("http://test", service.fetch, service.wsFactory);
    const states: string[] = [];
    const frames: OutputFrame[] = [];
    const flow = new SessionFlow(client, {
        onState: (s) => states.push(s.phase),
        onFrame: (f) => frames.push(f),
    });
    return { flow, states, frames };
}

async function drive(flow: SessionFlow, service: FakeService): Promise<void> {
    const stream = await flow.startNextTrial();
    for (let k = 1; k <= service.n; k++) {
        stream.send({ k, u: 1.0 });
    }
    // completion state refresh is async
    await new Promise((r) => setTimeout(r, 0));
}

describe("session flow", () => {
    it("connects and reads group settings from the server", async () => {
        const service = new FakeService();
        const { flow } = makeFlow(service);
        await flow.connect("s01", 3);
        expect(flow.state.session?.preview_s).toBe(1.0);
        expect(flow.state.phase).toBe("rest");
        expect(flow.progressLabel).toBe("trial 1 of 40");
    });

    it("runs a trial to completion and advances", async () => {
        const service = new FakeService(40, 10);
        const { flow, frames } = makeFlow(service);
        await flow.connect("s01", 3);
        await drive(flow, service);
        expect(frames).toHaveLength(10);
        expect(frames.every((f) => isOutputFrame(f))).toBe(true);
        expect(flow.state.phase).toBe("rest");
        expect(flow.state.completedTrials).toBe(1);
    });

    it("shows the block-complete screen every tenth trial", async () => {
        const service = new FakeService(40, 3);
        const { flow } = makeFlow(service);
        await flow.connect("s01", 3);
        for (let t = 0; t < TRIALS_PER_BLOCK; t++) {
            await drive(flow, service);
        }
        expect(flow.state.completedTrials).toBe(10);
        expect(flow.state.phase).toBe("block-complete");
    });

    it("completes after the final trial", async () => {
        const service = new FakeService(2, 3);
        const { flow } = makeFlow(service);
        await flow.connect("s01", 3);
        await drive(flow, service);
        await drive(flow, service);
        expect(flow.state.phase).toBe("all-complete");
        await expect(flow.startNextTrial()).rejects.toThrow();
    });

    it("resumes at the next un-started trial after a drop", async () => {
        const service = new FakeService(40, 5);
        const { flow } = makeFlow(service);
        await flow.connect("s01", 3);
        await drive(flow, service);

        // a fresh flow (new page load) resumes from server state
        const { flow: flow2 } = makeFlow(service);
        await flow2.resume("abc");
        expect(flow2.state.completedTrials).toBe(1);
        expect(flow2.state.phase).toBe("rest");
    });

    it("flags an unexpected mid-trial close as disconnected", async () => {
        const service = new FakeService(40, 50);
        const { flow } = makeFlow(service);
        await flow.connect("s01", 3);
        const stream = await flow.startNextTrial();
        stream.send({ k: 1, u: 0 });
        stream.close();
        expect(flow.state.phase).toBe("disconnected");
    });

    it("never computes dynamics client-side", async () => {
        // the displayed y comes verbatim from the server frame
        const service = new FakeService(40, 4);
        const { flow, frames } = makeFlow(service);
        await flow.connect("s01", 3);
        await drive(flow, service);
        expect(frames.map((f) => f.y)).toEqual([0.1, 0.1, 0.1, 0.1]);
        expect(frames[0].preview).toEqual([0, 0.1]);
    });
});
