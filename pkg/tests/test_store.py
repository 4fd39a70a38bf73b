import json

import numpy as np
import pytest

from previewtrack.loop import ControllerModel, ExperimentConfig, run_trial
from previewtrack.refgen import generate
from previewtrack.store import (
    IdentifiedModelStore,
    TrialStore,
    trial_from_csv,
    trial_sidecar,
    trial_to_csv,
)

TS = 0.02


@pytest.fixture(scope="module")
def trial(plant_d):
    from previewtrack.loop import synthetic_subject

    ctrl = synthetic_subject(1.0, 0.3, 0.7, plant_d=plant_d)
    return run_trial(
        plant_d, ctrl, generate(31), ExperimentConfig(), subject_id="g3s01",
        group=3, trial_index=7,
    )


def test_csv_round_trip_is_bitwise(trial):
    back = trial_from_csv(trial_to_csv(trial), trial_sidecar(trial))
    assert np.array_equal(back.r, trial.r)
    assert np.array_equal(back.u, trial.u)
    assert np.array_equal(back.y, trial.y)
    assert back.divergent == trial.divergent
    assert back.subject_id == trial.subject_id
    assert back.reference_seed == trial.reference_seed


def test_store_save_load_round_trip(tmp_path, trial):
    store = TrialStore(tmp_path / "store")
    store.save(trial)
    assert store.has("g3s01", 7)
    back = store.load("g3s01", 7)
    assert np.array_equal(back.u, trial.u)
    assert np.array_equal(back.y, trial.y)


def test_manifest_round_trip(tmp_path):
    store = TrialStore(tmp_path / "store")
    store.write_manifest({"ts": TS, "n": 3000}, [1, 2, 3])
    manifest = store.read_manifest()
    assert manifest["seeds"] == [1, 2, 3]
    assert manifest["config"]["n"] == 3000
    assert len(manifest["config_hash"]) == 16


def test_corrupt_record_quarantined(tmp_path, trial):
    store = TrialStore(tmp_path / "store")
    store.save(trial)
    csv_path, _ = store._trial_paths("g3s01", 7)
    csv_path.write_text("k,t,r,u,y\n1,bogus\n")
    collected = list(store.iter_trials())
    assert collected == []
    assert csv_path.with_suffix(".csv.corrupt").exists()
    assert not store.has("g3s01", 7)


def test_iter_trials_sorted(tmp_path, trial, plant_d):
    store = TrialStore(tmp_path / "store")
    for sid, idx in (("b", 2), ("a", 9), ("b", 1), ("a", 3)):
        rec = run_trial(
            plant_d, ControllerModel.zero(TS), generate(1), ExperimentConfig(),
            subject_id=sid, group=1, trial_index=idx,
        )
        store.save(rec)
    order = [(t.subject_id, t.trial_index) for t in store.iter_trials()]
    assert order == [("a", 3), ("a", 9), ("b", 1), ("b", 2)]


def test_sidecar_schema(trial):
    doc = trial_sidecar(trial)
    assert set(doc) == {
        "subject_id", "group", "preview_s", "trial_index", "Ts", "n",
        "divergent", "reference_seed", "gaps",
    }
    json.dumps(doc)


def test_model_store_round_trip(tmp_path, plant_d, pools):
    from previewtrack.ssid import IdentifiedModel

    cand = pools.feedback[5]
    ctrl = ControllerModel.from_coeffs([0.1, 0.2, 0.3], 4, cand.beta, cand.alpha, cand.tau_fb, TS)
    ms = IdentifiedModelStore(tmp_path / "models")
    ms.save("s1", 3, IdentifiedModel(ctrl=ctrl, cost=0.5, vaf=0.9))
    assert ms.has("s1", 3)
    back = ms.load("s1", 3, TS)
    assert back.cost == 0.5
    assert list(ms.items()) == [("s1", 3)]
