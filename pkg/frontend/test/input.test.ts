import { describe, expect, it, vi } from "vitest";

import {
    DEFAULT_INPUT,
    GamepadDevice,
    InputSampler,
    mapToInputUnits,
    PointerDevice,
} from "../src/input.js";

describe("pointer mapping", () => {
    it("centered pointer gives zero", () => {
        const dev = new PointerDevice(() => 800);
        dev.handleMove(400);
        expect(dev.read()).toBe(0);
    });

    it("full deflection is symmetric", () => {
        const dev = new PointerDevice(() => 800);
        dev.handleMove(0);
        expect(dev.read()).toBe(-1);
        dev.handleMove(800);
        expect(dev.read()).toBe(1);
    });

    it("reports loss when the pointer leaves", () => {
        const dev = new PointerDevice(() => 800);
        dev.handleMove(100);
        dev.handleLeave();
        expect(dev.read()).toBeNull();
    });

    it("clamps beyond the element", () => {
        const dev = new PointerDevice(() => 800);
        dev.handleMove(1200);
        expect(dev.read()).toBe(1);
    });
});

describe("gamepad mapping", () => {
    it("reads the configured axis", () => {
        const dev = new GamepadDevice(() => ({ axes: [0.25, -0.5] }), 1);
        expect(dev.read()).toBe(-0.5);
    });

    it("null without a pad", () => {
        const dev = new GamepadDevice(() => null, 0);
        expect(dev.read()).toBeNull();
    });
});

describe("input units", () => {
    it("scales linearly through the gain", () => {
        const cfg = { ...DEFAULT_INPUT, gain: 5 };
        expect(mapToInputUnits(0, cfg)).toBe(0);
        expect(mapToInputUnits(1, cfg)).toBe(5);
        expect(mapToInputUnits(-1, cfg)).toBe(-5);
        expect(mapToInputUnits(0.5, cfg)).toBe(2.5);
    });
});

describe("sampler", () => {
    it("emits one frame per 20 ms sample index", () => {
        vi.useFakeTimers();
        let clock = 0;
        const frames: Array<[number, number]> = [];
        const sampler = new InputSampler(
            { read: () => 0.5 },
            { ...DEFAULT_INPUT, gain: 2 },
            (k, u) => frames.push([k, u]),
            () => { },
            () => clock,
        );
        const done = vi.fn();
        sampler.start(5, done);
        for (let step = 0; step < 12; step++) {
            clock += 10;
            vi.advanceTimersByTime(10);
        }
        expect(frames).toEqual([[1, 1], [2, 1], [3, 1], [4, 1], [5, 1]]);
        expect(done).toHaveBeenCalledOnce();
        vi.useRealTimers();
    });

    it("pauses on device loss and resumes without inventing samples", () => {
        vi.useFakeTimers();
        let clock = 0;
        let raw: number | null = 0.2;
        const frames: number[] = [];
        const losses: boolean[] = [];
        const sampler = new InputSampler(
            { read: () => raw },
            DEFAULT_INPUT,
            (k) => frames.push(k),
            (lost) => losses.push(lost),
            () => clock,
        );
        sampler.start(100, () => { });
        clock += 40;
        vi.advanceTimersByTime(40);
        expect(frames).toEqual([1, 2]);
        raw = null;
        clock += 100;
        vi.advanceTimersByTime(100);
        expect(losses).toEqual([true]);
        const during = frames.length;
        raw = 0.2;
        clock += 40;
        vi.advanceTimersByTime(40);
        expect(losses).toEqual([true, false]);
        expect(frames.length).toBeGreaterThan(during);
        // indices stay contiguous: the server never sees a gap from a pause
        expect(frames).toEqual(frames.map((_, i) => i + 1));
        sampler.stop();
        vi.useRealTimers();
    });
});
