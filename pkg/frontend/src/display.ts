// Pursuit display: red reference line and green controlled circle on a
// shared horizontal axis, with the previewed reference drawn as a white
// curve above the axis (future time increasing upward, sliding down as the
// trial clock advances). The horizontal extent always spans +/-4.4 hm.

export const DISPLAY_RANGE_HM = 4.4;

export type DisplayState = {
    rNow: number;              // hm
    yNow: number;              // hm
    preview: number[];         // hm, samples over [now, now + previewS]
    previewS: number;          // s
    divergent: boolean;
    trialClock: number;        // s
};

export type DisplayLayout = {
    width: number;             // px
    height: number;            // px
    axisY: number;             // px from top, main-axis row
    previewTop: number;        // px from top, where the far future sits
};

export function defaultLayout(width: number, height: number): DisplayLayout {
    return { width, height, axisY: Math.round(height * 0.8), previewTop: Math.round(height * 0.1) };
}

export function pxPerHm(layout: DisplayLayout): number {
    return layout.width / (2 * DISPLAY_RANGE_HM);
}

export function hmToPx(hm: number, layout: DisplayLayout): number {
    return layout.width / 2 + hm * pxPerHm(layout);
}

// Object positions clamp to the display edge; the state keeps the true value.
export function clampToDisplay(hm: number): { hm: number; clamped: boolean } {
    if (hm > DISPLAY_RANGE_HM) return { hm: DISPLAY_RANGE_HM, clamped: true };
    if (hm < -DISPLAY_RANGE_HM) return { hm: -DISPLAY_RANGE_HM, clamped: true };
    return { hm, clamped: false };
}

export type PreviewPoint = { x: number; y: number };

// Preview sample i sits offset (i/(n-1))*previewS seconds in the future and
// maps linearly between the axis row and the preview top.
export function previewPolyline(state: DisplayState, layout: DisplayLayout): PreviewPoint[] {
    if (state.previewS <= 0 || state.preview.length === 0) return [];
    const n = state.preview.length;
    const span = layout.axisY - layout.previewTop;
    return state.preview.map((hm, i) => ({
        x: hmToPx(hm, layout),
        y: layout.axisY - (n === 1 ? 0 : (i / (n - 1)) * span),
    }));
}

// Structural subset of CanvasRenderingContext2D used by the renderer, so
// tests can record calls without a DOM.
export interface Canvas2DLike {
    fillStyle: string | CanvasGradient | CanvasPattern;
    strokeStyle: string | CanvasGradient | CanvasPattern;
    lineWidth: number;
    fillRect(x: number, y: number, w: number, h: number): void;
    beginPath(): void;
    moveTo(x: number, y: number): void;
    lineTo(x: number, y: number): void;
    arc(x: number, y: number, r: number, a0: number, a1: number): void;
    stroke(): void;
    fill(): void;
}

export function render(ctx: Canvas2DLike, state: DisplayState, layout: DisplayLayout): void {
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, layout.width, layout.height);

    const curve = previewPolyline(state, layout);
    if (curve.length > 1) {
        ctx.strokeStyle = "#fff";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(curve[0].x, curve[0].y);
        for (let i = 1; i < curve.length; i++) {
            ctx.lineTo(curve[i].x, curve[i].y);
        }
        ctx.stroke();
    }

    const rx = hmToPx(clampToDisplay(state.rNow).hm, layout);
    ctx.strokeStyle = "#e33";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(rx, layout.axisY - 24);
    ctx.lineTo(rx, layout.axisY + 24);
    ctx.stroke();

    const yClamped = clampToDisplay(state.yNow);
    ctx.fillStyle = yClamped.clamped || state.divergent ? "#fa0" : "#2d2";
    ctx.beginPath();
    ctx.arc(hmToPx(yClamped.hm, layout), layout.axisY, 10, 0, 2 * Math.PI);
    ctx.fill();
}
