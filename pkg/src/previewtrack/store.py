"""On-disk trial store: one directory per subject, CSV + JSON per trial.

Sample values serialize with 17 significant digits so records round-trip
bit-exactly. A manifest records the reference seeds and a config hash so a
store can be resumed or audited; unreadable records are quarantined rather
than silently skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .loop import TrialRecord

log = logging.getLogger(__name__)

_FMT = ".17g"


class StoreError(RuntimeError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), _FMT)


def trial_to_csv(trial: TrialRecord) -> str:
    lines = ["k,t,r,u,y"]
    for k in range(trial.n):
        lines.append(
            f"{k + 1},{_fmt(k * trial.ts)},{_fmt(trial.r[k])},"
            f"{_fmt(trial.u[k])},{_fmt(trial.y[k])}"
        )
    return "\n".join(lines) + "\n"


def trial_sidecar(trial: TrialRecord) -> dict:
    return {
        "subject_id": trial.subject_id,
        "group": trial.group,
        "preview_s": trial.preview_s,
        "trial_index": trial.trial_index,
        "Ts": trial.ts,
        "n": trial.n,
        "divergent": trial.divergent,
        "reference_seed": trial.reference_seed,
        "gaps": trial.gaps,
    }


def trial_from_csv(csv_text: str, sidecar: dict) -> TrialRecord:
    rows = csv_text.strip().splitlines()
    if rows[0].strip() != "k,t,r,u,y":
        raise StoreError("unexpected CSV header")
    body = rows[1:]
    n = int(sidecar["n"])
    if len(body) != n:
        raise StoreError(f"expected {n} rows, found {len(body)}")
    r = np.empty(n)
    u = np.empty(n)
    y = np.empty(n)
    for i, line in enumerate(body):
        parts = line.split(",")
        r[i] = float(parts[2])
        u[i] = float(parts[3])
        y[i] = float(parts[4])
    return TrialRecord(
        subject_id=sidecar["subject_id"],
        group=int(sidecar["group"]),
        preview_s=float(sidecar["preview_s"]),
        trial_index=int(sidecar["trial_index"]),
        ts=float(sidecar["Ts"]),
        r=r,
        u=u,
        y=y,
        divergent=bool(sidecar["divergent"]),
        reference_seed=int(sidecar["reference_seed"]),
        gaps=int(sidecar.get("gaps", 0)),
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


class TrialStore:
    """Directory-backed collection of trial records."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def _trial_paths(self, subject_id: str, trial_index: int):
        d = self.root / "subjects" / subject_id
        stem = f"trial_{trial_index:03d}"
        return d / f"{stem}.csv", d / f"{stem}.json"

    def write_manifest(self, config: dict, seeds) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "seeds": [int(s) for s in seeds],
            "config": config,
            "config_hash": config_hash(config),
        }
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    def read_manifest(self) -> dict:
        path = self.root / "manifest.json"
        if not path.exists():
            raise StoreError(f"no manifest at {path}")
        return json.loads(path.read_text())

    def save(self, trial: TrialRecord) -> None:
        csv_path, json_path = self._trial_paths(trial.subject_id, trial.trial_index)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(trial_to_csv(trial))
        json_path.write_text(json.dumps(trial_sidecar(trial), indent=2))

    def has(self, subject_id: str, trial_index: int) -> bool:
        csv_path, json_path = self._trial_paths(subject_id, trial_index)
        return csv_path.exists() and json_path.exists()

    def load(self, subject_id: str, trial_index: int) -> TrialRecord:
        csv_path, json_path = self._trial_paths(subject_id, trial_index)
        try:
            sidecar = json.loads(json_path.read_text())
            return trial_from_csv(csv_path.read_text(), sidecar)
        except StoreError:
            raise
        except Exception as exc:
            raise StoreError(f"unreadable record {csv_path}: {exc}") from exc

    def quarantine(self, subject_id: str, trial_index: int) -> None:
        for path in self._trial_paths(subject_id, trial_index):
            if path.exists():
                path.rename(path.with_suffix(path.suffix + ".corrupt"))
        log.warning("quarantined record %s/%03d", subject_id, trial_index)

    def subjects(self) -> list[str]:
        base = self.root / "subjects"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def trial_indices(self, subject_id: str) -> list[int]:
        d = self.root / "subjects" / subject_id
        out = []
        for p in sorted(d.glob("trial_*.json")):
            try:
                out.append(int(p.stem.split("_")[1]))
            except ValueError:
                continue
        return out

    def iter_trials(self, quarantine_corrupt: bool = True):
        """Yield records in sorted (subject, trial) order, quarantining failures."""
        for subject_id in self.subjects():
            for idx in self.trial_indices(subject_id):
                try:
                    yield self.load(subject_id, idx)
                except StoreError as exc:
                    if quarantine_corrupt:
                        log.warning("%s", exc)
                        self.quarantine(subject_id, idx)
                    else:
                        raise


class IdentifiedModelStore:
    """Parallel directory tree of identified-model JSON files."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def _path(self, subject_id: str, trial_index: int) -> Path:
        return self.root / "subjects" / subject_id / f"trial_{trial_index:03d}.json"

    def has(self, subject_id: str, trial_index: int) -> bool:
        return self._path(subject_id, trial_index).exists()

    def save(self, subject_id: str, trial_index: int, model) -> None:
        path = self._path(subject_id, trial_index)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.to_json())

    def load(self, subject_id: str, trial_index: int, ts: float):
        from .ssid import IdentifiedModel

        return IdentifiedModel.from_json(self._path(subject_id, trial_index).read_text(), ts)

    def items(self):
        base = self.root / "subjects"
        if not base.exists():
            return
        for subject_dir in sorted(base.iterdir()):
            if not subject_dir.is_dir():
                continue
            for p in sorted(subject_dir.glob("trial_*.json")):
                yield subject_dir.name, int(p.stem.split("_")[1])
