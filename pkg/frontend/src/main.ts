// Browser bootstrap: wires the canvas renderer, the pointer/gamepad
// sampler, and the session flow together. The render loop runs at display
// refresh; input sampling runs on its own 20 ms timer and never blocks
// rendering.

import { defaultLayout, DisplayState, render } from "./display.js";
import { DEFAULT_INPUT, GamepadDevice, InputDevice, InputSampler, PointerDevice } from "./input.js";
import { ServiceClient } from "./protocol.js";
import { SessionFlow } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
}

export function boot(): void {
    const canvas = el<HTMLCanvasElement>("display");
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d unavailable");
    const status = el<HTMLDivElement>("status");
    const startBtn = el<HTMLButtonElement>("start");
    const subjectInput = el<HTMLInputElement>("subject");
    const groupInput = el<HTMLInputElement>("group");

    const layout = defaultLayout(canvas.width, canvas.height);
    const display: DisplayState = {
        rNow: 0, yNow: 0, preview: [], previewS: 0, divergent: false, trialClock: 0,
    };

    const pointer = new PointerDevice(() => canvas.clientWidth);
    canvas.addEventListener("pointermove", (ev) => pointer.handleMove(ev.offsetX));
    canvas.addEventListener("pointerleave", () => pointer.handleLeave());
    const gamepad = new GamepadDevice(
        () => navigator.getGamepads?.()[0] ?? null,
        DEFAULT_INPUT.gamepadAxis,
    );
    const device: InputDevice = {
        read: () => gamepad.read() ?? pointer.read(),
    };

    const baseUrl = `${location.protocol}//${location.host}`;
    const client = new ServiceClient(baseUrl);
    const flow = new SessionFlow(client, {
        onState: (state) => {
            switch (state.phase) {
                case "rest":
                    status.textContent = `${flow.progressLabel} — press start when ready`;
                    startBtn.disabled = false;
                    break;
                case "block-complete":
                    status.textContent =
                        `block complete (${state.completedTrials} trials done) — rest, then press start`;
                    startBtn.disabled = false;
                    break;
                case "running":
                    status.textContent = flow.progressLabel;
                    startBtn.disabled = true;
                    break;
                case "all-complete":
                    status.textContent = "all trials complete, thank you";
                    startBtn.disabled = true;
                    break;
                case "disconnected":
                    status.textContent = "connection lost — press start to resume";
                    startBtn.disabled = false;
                    break;
                default:
                    status.textContent = state.phase;
            }
        },
        onFrame: (frame) => {
            display.rNow = frame.r_now;
            display.yNow = frame.y;
            display.preview = frame.preview;
            display.divergent = frame.divergent;
        },
    });

    let sampler: InputSampler | null = null;

    async function runTrial(): Promise<void> {
        const stream = await flow.startNextTrial();
        const trial = flow.state.trial;
        if (!trial) return;
        display.previewS = trial.preview_s;
        display.trialClock = 0;
        sampler?.stop();
        sampler = new InputSampler(
            device,
            DEFAULT_INPUT,
            (k, u) => {
                display.trialClock = (k - 1) * trial.ts;
                stream.send({ k, u });
            },
            (lost) => {
                if (lost) status.textContent = "input device lost — move the pointer to continue";
            },
        );
        sampler.start(trial.n, () => { /* completion arrives from the server */ });
    }

    startBtn.addEventListener("click", () => {
        startBtn.disabled = true;
        const go = flow.state.session
            ? (flow.state.phase === "disconnected"
                ? flow.resume(flow.state.session.session_id).then(() => runTrial())
                : runTrial())
            : flow
                .connect(subjectInput.value || "anonymous", Number(groupInput.value) || 1)
                .then(() => runTrial());
        go.catch((err) => {
            status.textContent = String(err);
            startBtn.disabled = false;
        });
    });

    const frame = (): void => {
        render(ctx, display, layout);
        requestAnimationFrame(frame);
    };
    requestAnimationFrame(frame);
}

if (typeof document !== "undefined" && document.getElementById("display")) {
    boot();
}
