// Input capture at the 50 Hz trial clock. The default device is the
// horizontal pointer position (a zero-hardware stand-in for the wheel);
// a gamepad axis is used when one is connected. Raw device position in
// [-1, 1] maps through a configurable linear gain to input units, so a
// centered device always produces u = 0 and the extremes are symmetric.

export type InputConfig = {
    gain: number;          // input-units at full deflection
    sampleMs: number;      // trial clock step, 20 ms at 50 Hz
    gamepadAxis: number;
};

export const DEFAULT_INPUT: InputConfig = { gain: 8.0, sampleMs: 20, gamepadAxis: 0 };

export interface InputDevice {
    read(): number | null;   // raw position in [-1, 1], null when unavailable
}

export class PointerDevice implements InputDevice {
    private x: number | null = null;

    constructor(private width: () => number) { }

    handleMove(clientX: number): void {
        this.x = clientX;
    }

    handleLeave(): void {
        this.x = null;
    }

    read(): number | null {
        if (this.x === null) return null;
        const w = this.width();
        if (w <= 0) return null;
        const raw = (this.x / w) * 2 - 1;
        return Math.max(-1, Math.min(1, raw));
    }
}

export type GamepadReader = () => { axes: readonly number[] } | null;

export class GamepadDevice implements InputDevice {
    constructor(private reader: GamepadReader, private axis: number) { }

    read(): number | null {
        const pad = this.reader();
        if (!pad || pad.axes.length <= this.axis) return null;
        return Math.max(-1, Math.min(1, pad.axes[this.axis]));
    }
}

export function mapToInputUnits(raw: number, config: InputConfig): number {
    return config.gain * Math.max(-1, Math.min(1, raw));
}

export type SampleCallback = (k: number, u: number) => void;
export type DeviceLossCallback = (lost: boolean) => void;

// Fixed-step sampler indexed by sample count, not wall clock: the timer may
// jitter or stall, but k advances by elapsed/sampleMs so the sent indices
// stay aligned with the server's clock (the server's gap policy covers
// missed indices). Device loss pauses sampling and is surfaced to the UI.
export class InputSampler {
    private k = 0;
    private timer: ReturnType<typeof setInterval> | null = null;
    private startMs = 0;
    private deviceLost = false;

    constructor(
        private device: InputDevice,
        private config: InputConfig,
        private onSample: SampleCallback,
        private onDeviceLoss: DeviceLossCallback = () => { },
        private now: () => number = () => performance.now(),
    ) { }

    get sampleIndex(): number {
        return this.k;
    }

    start(nSamples: number, onDone: () => void): void {
        this.k = 0;
        this.startMs = this.now();
        this.timer = setInterval(() => {
            const due = Math.min(
                nSamples,
                Math.floor((this.now() - this.startMs) / this.config.sampleMs),
            );
            while (this.k < due) {
                const raw = this.device.read();
                if (raw === null) {
                    if (!this.deviceLost) {
                        this.deviceLost = true;
                        this.onDeviceLoss(true);
                    }
                    // shift the clock so the pause does not register as gaps
                    this.startMs += this.config.sampleMs;
                    break;
                }
                if (this.deviceLost) {
                    this.deviceLost = false;
                    this.onDeviceLoss(false);
                }
                this.k += 1;
                this.onSample(this.k, mapToInputUnits(raw, this.config));
            }
            if (this.k >= nSamples) {
                this.stop();
                onDone();
            }
        }, this.config.sampleMs / 2);
    }

    stop(): void {
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }
}
