"""Batch orchestration: cohorts of synthetic subjects, metric aggregation,
divergent-trial exclusion, and the group-level statistics.

Every subject sees the same sequence of reference commands (one shared seed
per trial index). Learning is modeled as an inversion-quality ramp over the
trial sequence; optional "wild" early trials scale the feedback gain past
the stability margin to produce divergent trials, which are recorded in
full but excluded from every aggregate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import refgen
from .loop import ControllerModel, ExperimentConfig, run_trial, synthetic_subject
from .lti import zoh_discretize
from .metrics import model_quality, performance_summary
from .spectra import closed_loop_response
from .ssid import IdentifiedModel, default_pools, ssid_search, validate
from .stats import anova_oneway, paired_t  # noqa: F401  (re-exported pipeline surface)
from .store import TrialStore, config_hash

log = logging.getLogger(__name__)

#: Trial buckets used by every summary table; they partition trials 1-40.
BUCKETS = (
    ("1-5", 1, 5),
    ("6-10", 6, 10),
    ("11-20", 11, 20),
    ("21-30", 21, 30),
    ("31-35", 31, 35),
    ("36-40", 36, 40),
)


def make_buckets(edges) -> tuple:
    """Bucket triples (label, lo, hi) from [lo, hi] pairs; must be disjoint
    and ascending."""
    buckets = []
    prev_hi = 0
    for lo, hi in edges:
        lo, hi = int(lo), int(hi)
        if lo <= prev_hi or hi < lo:
            raise ValueError(f"buckets must be ascending and disjoint, got [{lo}, {hi}]")
        buckets.append((f"{lo}-{hi}", lo, hi))
        prev_hi = hi
    if not buckets:
        raise ValueError("need at least one bucket")
    return tuple(buckets)

GROUP_QUALITY_CEILING = {1: 0.30, 2: 0.80, 3: 0.95, 4: 0.90}
GROUP_WILD_SUBJECTS = {1: 3, 2: 2, 3: 1, 4: 2}


@dataclass(frozen=True)
class SubjectSpec:
    """One synthetic subject: group membership plus its learning trajectory."""

    subject_id: str
    group: int
    sensory_delay_s: float = 0.3
    quality_start: float = 0.25
    quality_ceiling: float = 0.9
    learning_tau: float = 8.0
    wild_trials: int = 0
    wild_fb_scale: float = 6.0

    def quality(self, trial_index: int) -> float:
        ramp = 1.0 - math.exp(-(trial_index - 1) / self.learning_tau)
        return self.quality_start + (self.quality_ceiling - self.quality_start) * ramp

    def controller(self, trial_index: int, preview_s: float, plant_d) -> ControllerModel:
        scale = self.wild_fb_scale if trial_index <= self.wild_trials else 1.0
        return synthetic_subject(
            preview_s=preview_s,
            sensory_delay_s=self.sensory_delay_s,
            inversion_quality=self.quality(trial_index),
            plant_d=plant_d,
            fb_gain_scale=scale,
        )


def default_cohort(subjects_per_group: int = 11) -> list[SubjectSpec]:
    """Four preview groups with group-graded inversion-quality ceilings.

    Subjects within a group get small deterministic spreads in ceiling,
    start, and learning rate (so group statistics have within-group
    variance), kept narrower than the gaps between group ceilings. The
    first few subjects of each group get destabilized early trials so the
    divergent-count table has content weighted toward early buckets.
    """
    specs = []
    for group in (1, 2, 3, 4):
        for j in range(1, subjects_per_group + 1):
            wild = 2 if j <= GROUP_WILD_SUBJECTS[group] else 0
            specs.append(
                SubjectSpec(
                    subject_id=f"g{group}s{j:02d}",
                    group=group,
                    quality_ceiling=GROUP_QUALITY_CEILING[group] - 0.004 * (j - 1),
                    quality_start=0.25 - 0.01 * (j % 3),
                    learning_tau=8.0 + 0.5 * ((j - 1) % 5),
                    wild_trials=wild,
                )
            )
    return specs


def reference_seeds(master_seed: int, n_trials: int = 40) -> list[int]:
    rng = np.random.default_rng(master_seed)
    return [int(s) for s in rng.integers(0, 2**62, size=n_trials)]


def _cfg_dict(cfg: ExperimentConfig) -> dict:
    return {
        "plant_num": list(cfg.plant.num),
        "plant_den": list(cfg.plant.den),
        "ts": cfg.ts,
        "n": cfg.n,
        "preview_by_group": {str(k): v for k, v in sorted(cfg.preview_by_group.items())},
        "divergence_bound": cfg.divergence_bound,
        "trials_per_subject": cfg.trials_per_subject,
        "input_gain": cfg.input_gain,
    }


def run_experiment(
    cfg: ExperimentConfig,
    subjects: list[SubjectSpec],
    store: TrialStore,
    seeds: list[int],
    progress=None,
) -> TrialStore:
    """Simulate subjects x trials into the store; idempotent and resumable.

    Existing records are kept (their presence short-circuits the trial), so
    re-running with the same seeds fills only what is missing. A manifest
    mismatch aborts rather than mixing incompatible configurations.
    """
    if len(seeds) < cfg.trials_per_subject:
        raise ValueError("need one reference seed per trial")
    cfg_d = _cfg_dict(cfg)
    if (store.root / "manifest.json").exists():
        manifest = store.read_manifest()
        if manifest["config_hash"] != config_hash(cfg_d):
            raise ValueError("store manifest was written with a different configuration")
        if manifest["seeds"][: cfg.trials_per_subject] != list(seeds[: cfg.trials_per_subject]):
            raise ValueError("store manifest was written with different seeds")
    else:
        store.write_manifest(cfg_d, seeds)
    plant_d = zoh_discretize(cfg.plant, cfg.ts)
    commands = {}
    for spec in subjects:
        preview = cfg.preview_by_group[spec.group]
        for trial_index in range(1, cfg.trials_per_subject + 1):
            if store.has(spec.subject_id, trial_index):
                continue
            seed = seeds[trial_index - 1]
            if seed not in commands:
                commands[seed] = refgen.generate(seed)
            ctrl = spec.controller(trial_index, preview, plant_d)
            trial = run_trial(
                plant_d,
                ctrl,
                commands[seed],
                cfg,
                subject_id=spec.subject_id,
                group=spec.group,
                trial_index=trial_index,
            )
            store.save(trial)
            if progress is not None:
                progress(spec.subject_id, trial_index)
    return store


def identify_store(
    store: TrialStore,
    model_store,
    plant_d,
    pools=None,
    weighting: str = "none",
    progress=None,
):
    """Run the identification on every non-divergent trial in the store.

    Divergent trials are skipped with a log line; existing outputs are kept
    (resumable). Returns the model store.
    """
    pools = pools if pools is not None else default_pools(plant_d)
    for trial in store.iter_trials():
        if trial.divergent:
            log.info(
                "skipping divergent trial %s/%03d", trial.subject_id, trial.trial_index
            )
            continue
        if model_store.has(trial.subject_id, trial.trial_index):
            continue
        frd = closed_loop_response(trial)
        model = ssid_search(frd.H, plant_d, pools, weighting=weighting, valid=frd.valid)
        score = validate(trial, model, plant_d)
        model = IdentifiedModel(
            ctrl=model.ctrl,
            cost=model.cost,
            vaf=score,
            weighted=model.weighted,
            rank_deficient=model.rank_deficient,
        )
        model_store.save(trial.subject_id, trial.trial_index, model)
        if progress is not None:
            progress(trial.subject_id, trial.trial_index)
    return model_store


@dataclass
class MetricRow:
    """Flat per-trial metric record feeding aggregation and the report."""

    subject_id: str
    group: int
    trial_index: int
    divergent: bool
    values: dict


def performance_rows(store: TrialStore) -> list[MetricRow]:
    rows = []
    for trial in store.iter_trials():
        if trial.divergent:
            values = {}
        else:
            summary = performance_summary(trial)
            values = {"e_bar": summary.e_bar, "Em": summary.Em, "Ep": summary.Ep}
        rows.append(
            MetricRow(
                subject_id=trial.subject_id,
                group=trial.group,
                trial_index=trial.trial_index,
                divergent=trial.divergent,
                values=values,
            )
        )
    return rows


def model_rows(store: TrialStore, model_store, plant_d) -> list[MetricRow]:
    rows = []
    for trial in store.iter_trials():
        if trial.divergent or not model_store.has(trial.subject_id, trial.trial_index):
            continue
        model = model_store.load(trial.subject_id, trial.trial_index, plant_d.ts)
        quality = model_quality(model.ctrl, plant_d)
        rows.append(
            MetricRow(
                subject_id=trial.subject_id,
                group=trial.group,
                trial_index=trial.trial_index,
                divergent=False,
                values={
                    "ff_gap": quality.ff_gap,
                    "fb_norm": quality.fb_norm,
                    "Me": quality.Me,
                    "Pe": quality.Pe,
                    "T_ff": quality.T_ff,
                    "T_fb": quality.T_fb,
                    "J": model.cost,
                    "vaf": model.vaf,
                },
            )
        )
    return rows


@dataclass
class GroupSummary:
    """Aggregate of one metric: per-trial mean/std curves and bucket means.

    Divergent trials never contribute; a bucket with no valid trials is a
    None gap, not a zero.
    """

    metric: str
    groups: tuple
    n_trials: int
    bucket_labels: tuple = tuple(label for label, _, _ in BUCKETS)
    per_trial_mean: dict = field(default_factory=dict)
    per_trial_std: dict = field(default_factory=dict)
    per_trial_count: dict = field(default_factory=dict)
    bucket_means: dict = field(default_factory=dict)
    change: dict = field(default_factory=dict)


def aggregate(
    rows: list[MetricRow], metric: str, n_trials: int = 40, buckets=BUCKETS
) -> GroupSummary:
    groups = tuple(sorted({r.group for r in rows}))
    out = GroupSummary(
        metric=metric, groups=groups, n_trials=n_trials,
        bucket_labels=tuple(label for label, _, _ in buckets),
    )
    for g in groups:
        # reductions run over subject-sorted values so the result is
        # permutation-invariant in floating point, not just in exact math
        by_trial = [[] for _ in range(n_trials)]
        for r in rows:
            if r.group != g or r.divergent or metric not in r.values:
                continue
            by_trial[r.trial_index - 1].append((r.subject_id, r.values[metric]))
        for entries in by_trial:
            entries.sort(key=lambda sv: sv[0])
        mean = np.full(n_trials, np.nan)
        std = np.full(n_trials, np.nan)
        count = np.zeros(n_trials, dtype=int)
        for i, entries in enumerate(by_trial):
            vals = [v for _, v in entries]
            count[i] = len(vals)
            if vals:
                mean[i] = float(np.mean(vals))
                std[i] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out.per_trial_mean[g] = mean
        out.per_trial_std[g] = std
        out.per_trial_count[g] = count
        means = {}
        for label, lo, hi in buckets:
            vals = [v for sub in by_trial[lo - 1 : hi] for _, v in sub]
            means[label] = float(np.mean(vals)) if vals else None
        out.bucket_means[g] = means
        first = means[buckets[0][0]]
        last = means[buckets[-1][0]]
        out.change[g] = (last - first) if (first is not None and last is not None) else None
    return out


def divergent_counts(rows: list[MetricRow], buckets=BUCKETS) -> dict:
    """Per-group divergent-trial tallies per bucket plus a total."""
    groups = sorted({r.group for r in rows})
    table = {}
    for g in groups:
        counts = {label: 0 for label, _, _ in buckets}
        total = 0
        for r in rows:
            if r.group != g or not r.divergent:
                continue
            total += 1
            for label, lo, hi in buckets:
                if lo <= r.trial_index <= hi:
                    counts[label] += 1
                    break
        counts["total"] = total
        table[g] = counts
    return table


def last_bucket_subject_means(rows: list[MetricRow], metric: str, buckets=BUCKETS) -> dict:
    """Per-subject means of a metric over the last bucket, keyed by group.

    These are the per-group samples used for the between-group one-way
    ANOVA (one sample per subject).
    """
    label, lo, hi = buckets[-1]
    by_subject = {}
    for r in rows:
        if r.divergent or metric not in r.values:
            continue
        if lo <= r.trial_index <= hi:
            by_subject.setdefault((r.group, r.subject_id), []).append(
                (r.trial_index, r.values[metric])
            )
    out = {}
    for (g, sid), pairs in sorted(by_subject.items()):
        out.setdefault(g, []).append(float(np.mean([v for _, v in sorted(pairs)])))
    return out


def bucket_subject_means(
    rows: list[MetricRow], metric: str, bucket_label: str, buckets=BUCKETS
) -> dict:
    """Per-subject bucket means keyed by group, subjects in sorted id order."""
    spec = next(b for b in buckets if b[0] == bucket_label)
    _, lo, hi = spec
    by_subject = {}
    for r in rows:
        if r.divergent or metric not in r.values:
            continue
        if lo <= r.trial_index <= hi:
            by_subject.setdefault((r.group, r.subject_id), []).append(
                (r.trial_index, r.values[metric])
            )
    out = {}
    for (g, sid), pairs in sorted(by_subject.items()):
        out.setdefault(g, {})[sid] = float(np.mean([v for _, v in sorted(pairs)]))
    return out
