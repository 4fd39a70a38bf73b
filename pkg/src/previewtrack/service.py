"""Live-trial session service.

The plant runs server-side: clients stream raw input samples and get back
the authoritative output, error, and preview window for each sample index.
Records are therefore identical in schema and content to simulated trials,
no matter how jittery the client clock is; timing jitter shows up only in
the gap count. Frames:

    client -> server   {"k": int, "u": float}
    server -> client   {"k": int, "y": float, "e": float, "r_now": float,
                        "preview": [float, ...], "divergent": bool}

Frames with k beyond the next expected index trigger a zero-order hold of
the last input over the gap; frames at or below an already-processed index
are acknowledged without advancing the plant.
"""

from __future__ import annotations

import logging
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from . import refgen
from .loop import ExperimentConfig, TrialRecord, detect_divergence
from .lti import StepFilter, zoh_discretize
from .store import TrialStore

log = logging.getLogger(__name__)

HM_TO_CM = 5.45   # physical scale metadata for clients that render real units


class SessionError(RuntimeError):
    pass


@dataclass
class LiveSession:
    """One subject's session: a sequence of trials against the shared seeds."""

    session_id: str
    subject_id: str
    group: int
    preview_s: float
    cfg: ExperimentConfig
    seeds: list
    store: TrialStore
    plant_d: object
    trial_index: int = 1
    status: str = "idle"
    k: int = 0
    gaps: int = 0
    divergent: bool = False
    last_u: float = 0.0
    _plant: StepFilter | None = None
    _cmd: object | None = None
    _r: np.ndarray | None = None
    _u: np.ndarray | None = None
    _y: np.ndarray | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def start_trial(self) -> dict:
        with self.lock:
            if self.status == "running":
                raise SessionError("a trial is already running")
            if self.trial_index > self.cfg.trials_per_subject:
                raise SessionError("all trials completed")
            seed = self.seeds[self.trial_index - 1]
            self._cmd = refgen.generate(seed)
            self._r = refgen.sample(self._cmd, self.cfg.ts, self.cfg.n)
            self._u = np.zeros(self.cfg.n)
            self._y = np.zeros(self.cfg.n)
            self._plant = StepFilter(self.plant_d)
            self.k = 0
            self.gaps = 0
            self.divergent = False
            self.last_u = 0.0
            self.status = "running"
            return {
                "trial_index": self.trial_index,
                "reference_seed": int(seed),
                "n": self.cfg.n,
                "ts": self.cfg.ts,
                "preview_s": self.preview_s,
            }

    def _advance(self, u_raw: float) -> dict:
        # mirrors the batch loop: output first (plant is strictly proper),
        # then the state update with this sample's input
        k = self.k   # 0-based position of the sample being produced
        u_eff = self.cfg.input_gain * float(u_raw)
        yk = self._plant.peek()
        rk = float(self._r[k])
        ek = rk - yk
        self._u[k] = u_eff
        self._y[k] = yk
        self._plant.step(u_eff)
        self.last_u = float(u_raw)
        self.k = k + 1
        if abs(yk) > self.cfg.divergence_bound:
            self.divergent = True
        win = refgen.preview_window(
            self._cmd, k * self.cfg.ts, self.preview_s, self.cfg.preview_resolution_s
        )
        return {
            "k": k + 1,
            "y": yk,
            "e": ek,
            "r_now": rk,
            "preview": [float(v) for v in win.values],
            "divergent": self.divergent,
        }

    def step(self, k: int, u_raw: float) -> dict:
        """Process frame {k, u}; fills gaps by holding the last input."""
        with self.lock:
            if self.status != "running":
                raise SessionError("no running trial")
            expected = self.k + 1
            if k < expected:
                return {
                    "k": k,
                    "duplicate": True,
                    "y": float(self._y[k - 1]),
                    "e": float(self._r[k - 1] - self._y[k - 1]),
                    "r_now": float(self._r[k - 1]),
                    "preview": [],
                    "divergent": self.divergent,
                }
            if k > self.cfg.n:
                raise SessionError(f"sample index {k} beyond trial length {self.cfg.n}")
            while self.k + 1 < k:
                self.gaps += 1
                self._advance(self.last_u)
            frame = self._advance(u_raw)
            if self.k >= self.cfg.n:
                self._finalize_locked()
            return frame

    def _finalize_locked(self) -> TrialRecord:
        trial = TrialRecord(
            subject_id=self.subject_id,
            group=self.group,
            preview_s=self.preview_s,
            trial_index=self.trial_index,
            ts=self.cfg.ts,
            r=self._r,
            u=self._u,
            y=self._y,
            divergent=detect_divergence(self._y, self.cfg.divergence_bound),
            reference_seed=int(self.seeds[self.trial_index - 1]),
            gaps=self.gaps,
        )
        self.store.save(trial)
        self.trial_index += 1
        if self.trial_index > self.cfg.trials_per_subject:
            self.status = "complete"
        else:
            self.status = "divergent-complete" if trial.divergent else "idle"
        log.info(
            "finalized %s trial %d (divergent=%s, gaps=%d)",
            self.subject_id, trial.trial_index, trial.divergent, trial.gaps,
        )
        return trial

    def finalize_trial(self) -> TrialRecord:
        with self.lock:
            if self.status != "running":
                raise SessionError("no running trial to finalize")
            if self.k < self.cfg.n:
                raise SessionError(f"only {self.k} of {self.cfg.n} samples processed")
            return self._finalize_locked()

    def state(self) -> dict:
        return {
            "session_id": self.session_id,
            "subject_id": self.subject_id,
            "group": self.group,
            "preview_s": self.preview_s,
            "trial_index": self.trial_index,
            "status": self.status,
            "k": self.k,
            "gaps": self.gaps,
            "divergent": self.divergent,
            "trials_total": self.cfg.trials_per_subject,
        }


class CreateSessionRequest(BaseModel):
    subject_id: str
    group: int


def create_app(
    cfg: ExperimentConfig | None = None,
    store_root: str = "live_store",
    seeds: list | None = None,
    master_seed: int = 20260810,
) -> FastAPI:
    from .pipeline import reference_seeds

    cfg = cfg if cfg is not None else ExperimentConfig()
    seeds = seeds if seeds is not None else reference_seeds(master_seed, cfg.trials_per_subject)
    store = TrialStore(store_root)
    plant_d = zoh_discretize(cfg.plant, cfg.ts)
    sessions: dict[str, LiveSession] = {}
    registry_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_app):
        yield
        # completed trials were persisted at finalize time; anything still
        # running is discarded, loudly
        for s in sessions.values():
            if s.status == "running":
                log.warning(
                    "shutdown mid-trial: %s trial %d discarded (%d of %d samples)",
                    s.subject_id, s.trial_index, s.k, s.cfg.n,
                )

    app = FastAPI(title="previewtrack live service", lifespan=lifespan)

    def _get(session_id: str) -> LiveSession:
        try:
            return sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        if req.group not in cfg.preview_by_group:
            raise HTTPException(status_code=422, detail=f"unknown group {req.group}")
        with registry_lock:
            for s in sessions.values():
                if s.subject_id == req.subject_id and s.status != "complete":
                    raise HTTPException(
                        status_code=409,
                        detail=f"subject {req.subject_id} already has an active session",
                    )
            session = LiveSession(
                session_id=uuid.uuid4().hex[:12],
                subject_id=req.subject_id,
                group=req.group,
                preview_s=cfg.preview_by_group[req.group],
                cfg=cfg,
                seeds=seeds,
                store=store,
                plant_d=plant_d,
            )
            sessions[session.session_id] = session
        out = session.state()
        out["hm_to_cm"] = HM_TO_CM
        out["input_gain"] = cfg.input_gain
        return out

    @app.post("/sessions/{session_id}/trials")
    def start_trial(session_id: str):
        try:
            return _get(session_id).start_trial()
        except SessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/sessions/{session_id}/state")
    def session_state(session_id: str):
        return _get(session_id).state()

    @app.get("/trials/{trial_id}")
    def get_trial(trial_id: str):
        # trial ids are "<subject_id>-<trial_index>"
        subject_id, _, index_part = trial_id.rpartition("-")
        if not subject_id or not index_part.isdigit():
            raise HTTPException(status_code=422, detail="trial id is <subject>-<index>")
        trial_index = int(index_part)
        if not store.has(subject_id, trial_index):
            raise HTTPException(status_code=404, detail="no such trial")
        trial = store.load(subject_id, trial_index)
        from .store import trial_sidecar

        doc = trial_sidecar(trial)
        doc.update(
            trial_id=trial_id,
            r=[float(v) for v in trial.r],
            u=[float(v) for v in trial.u],
            y=[float(v) for v in trial.y],
        )
        return doc

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        await ws.accept()
        session = sessions.get(session_id)
        if session is None:
            await ws.close(code=4004)
            return
        try:
            while True:
                frame = await ws.receive_json()
                try:
                    reply = session.step(int(frame["k"]), float(frame["u"]))
                except SessionError as exc:
                    await ws.send_json({"error": str(exc)})
                    continue
                await ws.send_json(reply)
                if session.status != "running" and not reply.get("duplicate"):
                    await ws.send_json({"trial_complete": True, "status": session.status})
        except WebSocketDisconnect:
            return

    return app
