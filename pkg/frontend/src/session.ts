// Trial sequencing: blocks of 10 trials with rest screens between trials
// and a block-complete screen every 10th, out of 40 total. All progress
// state (trial index, group, preview length) is read from the server, so a
// dropped connection resumes at the next un-started trial.

import { OutputFrame, ServiceClient, SessionInfo, TrialInfo, TrialStream } from "./protocol.js";

export const TRIALS_PER_BLOCK = 10;

export type FlowPhase =
    | "connecting"
    | "rest"            // between trials, ready to start the next
    | "block-complete"  // every TRIALS_PER_BLOCK trials
    | "running"
    | "all-complete"
    | "disconnected";

export type FlowState = {
    phase: FlowPhase;
    session: SessionInfo | null;
    trial: TrialInfo | null;
    completedTrials: number;
    lastFrame: OutputFrame | null;
};

export type FlowEvents = {
    onState?: (state: FlowState) => void;
    onFrame?: (frame: OutputFrame) => void;
};

export class SessionFlow {
    readonly state: FlowState = {
        phase: "connecting",
        session: null,
        trial: null,
        completedTrials: 0,
        lastFrame: null,
    };
    private stream: TrialStream | null = null;

    constructor(
        private client: ServiceClient,
        private events: FlowEvents = {},
    ) { }

    private emit(): void {
        this.events.onState?.(this.state);
    }

    private applySession(info: SessionInfo): void {
        this.state.session = info;
        this.state.completedTrials = info.trial_index - 1;
        if (info.status === "complete") {
            this.state.phase = "all-complete";
        } else if (
            this.state.completedTrials > 0
            && this.state.completedTrials % TRIALS_PER_BLOCK === 0
        ) {
            this.state.phase = "block-complete";
        } else {
            this.state.phase = "rest";
        }
        this.emit();
    }

    // The group is chosen server-side configuration; the client only relays it.
    async connect(subjectId: string, group: number): Promise<void> {
        this.applySession(await this.client.createSession(subjectId, group));
    }

    // After a network drop: re-read authoritative progress and continue.
    async resume(sessionId: string): Promise<void> {
        this.applySession(await this.client.getState(sessionId));
    }

    get progressLabel(): string {
        const total = this.state.session?.trials_total ?? 40;
        return `trial ${this.state.completedTrials + 1} of ${total}`;
    }

    async startNextTrial(): Promise<TrialStream> {
        const session = this.state.session;
        if (!session) throw new Error("no session");
        if (this.state.phase === "running") throw new Error("trial already running");
        if (this.state.phase === "all-complete") throw new Error("all trials done");
        this.state.trial = await this.client.startTrial(session.session_id);
        this.state.phase = "running";
        this.emit();
        const stream = this.client.openStream(session.session_id);
        stream.onFrame = (frame) => {
            this.state.lastFrame = frame;
            this.events.onFrame?.(frame);
        };
        stream.onComplete = () => {
            void this.finishTrial();
        };
        stream.onClose = () => {
            if (this.state.phase === "running") {
                this.state.phase = "disconnected";
                this.emit();
            }
        };
        this.stream = stream;
        await stream.ready();
        return stream;
    }

    private async finishTrial(): Promise<void> {
        this.stream?.close();
        this.stream = null;
        const session = this.state.session;
        if (session) {
            this.applySession(await this.client.getState(session.session_id));
        }
    }
}
