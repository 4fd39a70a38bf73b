import json

import numpy as np
import pytest

from previewtrack.loop import ExperimentConfig
from previewtrack.pipeline import (
    SubjectSpec,
    identify_store,
    model_rows,
    performance_rows,
    reference_seeds,
    run_experiment,
)
from previewtrack.report import emit_report
from previewtrack.ssid import CandidatePools
from previewtrack.store import IdentifiedModelStore, TrialStore

EXPECTED_TABLES = {
    "divergent_counts.csv",
    "trial_metrics.csv",
    "model_metrics.csv",
    "mean_time_avg_error.csv",
    "mean_freq_mag_error.csv",
    "mean_freq_phase_error.csv",
    "mean_ff_inverse_gap.csv",
    "mean_fb_band_norm.csv",
    "mean_ff_delay_ms.csv",
    "mean_fb_delay_ms.csv",
    "mean_ff_mag_error.csv",
    "mean_ff_phase_error.csv",
    "mean_vaf.csv",
}


@pytest.fixture(scope="module")
def small_bundle(tmp_path_factory, plant_d, pools):
    # two-subject micro cohort with identification, reported end to end
    root = tmp_path_factory.mktemp("bundle")
    cfg = ExperimentConfig(trials_per_subject=2)
    subjects = [
        SubjectSpec(subject_id="g1s01", group=1, quality_ceiling=0.3),
        SubjectSpec(subject_id="g3s01", group=3, quality_ceiling=0.9),
    ]
    store = TrialStore(root / "trials")
    run_experiment(cfg, subjects, store, reference_seeds(5, 2))
    models = IdentifiedModelStore(root / "models")
    small_pools = CandidatePools(feedback=pools.feedback[::40], tau_ffs=range(0, 16))
    identify_store(store, models, plant_d, pools=small_pools)
    out = root / "report"
    bundle = emit_report(store, models, plant_d, out)
    return out, bundle, store, models


def test_bundle_contains_all_tables(small_bundle):
    out, bundle, *_ = small_bundle
    assert set(bundle["tables"]) == EXPECTED_TABLES
    for name in bundle["tables"]:
        assert (out / "tables" / name).exists()


def test_bundle_contains_plot_series_and_figures(small_bundle):
    out, bundle, *_ = small_bundle
    assert "feedforward_bode.json" in bundle["plots"]
    assert "statistics.json" in bundle["plots"]
    from previewtrack.report import METRIC_SPECS

    series = [p for p in bundle["plots"] if p.startswith("series_")]
    assert len(series) == len(METRIC_SPECS)   # one per metric
    for name in bundle["figures"]:
        assert (out / "figures" / name).exists()
    assert any(f.startswith("feedforward_bode_group") for f in bundle["figures"])


def test_series_schema(small_bundle):
    out, *_ = small_bundle
    doc = json.loads((out / "plots" / "series_time_avg_error.json").read_text())
    assert doc["metric"] == "e_bar"
    g1 = doc["groups"]["1"]
    assert len(g1["trials"]) == 40
    assert len(g1["mean"]) == 40
    # only two trials simulated; the rest are gaps
    assert g1["mean"][0] is not None
    assert g1["mean"][10] is None


def test_bode_series_includes_inverse_plant_reference(small_bundle, plant_d):
    out, *_ = small_bundle
    doc = json.loads((out / "plots" / "feedforward_bode.json").read_text())
    from previewtrack.lti import freq_response
    from previewtrack.metrics import quadrature_grid

    omega = quadrature_grid()
    want = np.abs(1.0 / freq_response(plant_d, omega))
    assert np.allclose(doc["inverse_plant"]["magnitude"], want)
    assert doc["groups"]


def test_divergent_table_shape(small_bundle):
    out, *_ = small_bundle
    lines = (out / "tables" / "divergent_counts.csv").read_text().strip().splitlines()
    assert lines[0] == "group,1-5,6-10,11-20,21-30,31-35,36-40,total"


def test_empty_store_emits_schema_valid_bundle(tmp_path, plant_d):
    store = TrialStore(tmp_path / "empty")
    bundle = emit_report(store, None, plant_d, tmp_path / "report")
    assert set(bundle["tables"]) == EXPECTED_TABLES
    doc = json.loads((tmp_path / "report" / "plots" / "statistics.json").read_text())
    assert doc == {}
    series = json.loads(
        (tmp_path / "report" / "plots" / "series_time_avg_error.json").read_text()
    )
    assert series["groups"] == {}


def test_metric_rows_round_trip(small_bundle, plant_d):
    _, _, store, models = small_bundle
    perf = performance_rows(store)
    assert {r.subject_id for r in perf} == {"g1s01", "g3s01"}
    mdl = model_rows(store, models, plant_d)
    assert all("ff_gap" in r.values for r in mdl)
    assert all(r.values["vaf"] > 0.99 for r in mdl)
