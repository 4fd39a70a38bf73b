"""Report bundle: delimited tables, JSON plot series, and rendered figures.

Layout under the output directory:

    tables/*.csv    bucketed group means (one file per metric) and the
                    divergent-trial counts
    plots/*.json    per-trial mean/std series per group, feedforward Bode
                    data against the inverse plant, and the statistics
    figures/*.png   matplotlib renderings of the same series
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .lti import DiscreteTF, freq_response
from .metrics import quadrature_grid
from .pipeline import (
    BUCKETS,
    GroupSummary,
    MetricRow,
    aggregate,
    bucket_subject_means,
    divergent_counts,
    last_bucket_subject_means,
)
from .stats import anova_oneway, paired_t, pairwise_bonferroni

log = logging.getLogger(__name__)

#: metric key -> (table/figure stem, axis label, include change column)
METRIC_SPECS = {
    "e_bar": ("time_avg_error", "time-averaged |e| (hm)", False),
    "Em": ("freq_mag_error", "frequency-averaged magnitude error", True),
    "Ep": ("freq_phase_error", "frequency-averaged phase error", True),
    "ff_gap": ("ff_inverse_gap", "feedforward gap to inverse plant", False),
    "fb_norm": ("fb_band_norm", "feedback band norm", False),
    "T_ff": ("ff_delay_ms", "feedforward delay (ms)", False),
    "T_fb": ("fb_delay_ms", "feedback delay (ms)", False),
    "Me": ("ff_mag_error", "feedforward loop magnitude error", True),
    "Pe": ("ff_phase_error", "feedforward loop phase error", True),
    "vaf": ("vaf", "variance accounted for", False),
}

GROUP_COLORS = {1: "tab:red", 2: "tab:orange", 3: "tab:green", 4: "tab:blue"}


def _fmt(v) -> str:
    return "" if v is None else format(v, ".10g")


def write_bucket_table(summary: GroupSummary, path: Path, include_change: bool) -> None:
    header = ["group"] + list(summary.bucket_labels)
    if include_change:
        header.append("change")
    lines = [",".join(header)]
    for g in summary.groups:
        row = [str(g)] + [_fmt(summary.bucket_means[g][label]) for label in summary.bucket_labels]
        if include_change:
            row.append(_fmt(summary.change[g]))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_divergent_table(table: dict, path: Path, buckets=BUCKETS) -> None:
    header = ["group"] + [label for label, _, _ in buckets] + ["total"]
    lines = [",".join(header)]
    for g in sorted(table):
        counts = table[g]
        lines.append(
            ",".join([str(g)] + [str(counts[label]) for label, _, _ in buckets] + [str(counts["total"])])
        )
    path.write_text("\n".join(lines) + "\n")


def write_trial_metrics(rows: list[MetricRow], columns: list[str], path: Path) -> None:
    """One CSV row per trial, keyed by (subject, group, trial)."""
    header = ["subject_id", "group", "trial_index", "divergent"] + columns
    lines = [",".join(header)]
    for r in sorted(rows, key=lambda r: (r.subject_id, r.trial_index)):
        cells = [r.subject_id, str(r.group), str(r.trial_index), str(int(r.divergent))]
        cells += [_fmt(r.values.get(c)) for c in columns]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def summary_series(summary: GroupSummary) -> dict:
    series = {"metric": summary.metric, "groups": {}}
    for g in summary.groups:
        series["groups"][str(g)] = {
            "trials": list(range(1, summary.n_trials + 1)),
            "mean": [None if np.isnan(v) else float(v) for v in summary.per_trial_mean[g]],
            "std": [None if np.isnan(v) else float(v) for v in summary.per_trial_std[g]],
            "count": [int(c) for c in summary.per_trial_count[g]],
        }
    return series


def plot_summary(summary: GroupSummary, label: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    trials = np.arange(1, summary.n_trials + 1)
    for g in summary.groups:
        mean = summary.per_trial_mean[g]
        std = summary.per_trial_std[g]
        ax.errorbar(
            trials,
            mean,
            yerr=std,
            fmt="o",
            ms=3,
            lw=1,
            capsize=2,
            color=GROUP_COLORS.get(g, None),
            label=f"group {g}",
        )
    ax.set_xlabel("trial")
    ax.set_ylabel(label)
    if summary.groups:
        ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def feedforward_bode_data(
    store, model_store, plant_d: DiscreteTF, trials=(1, 40)
) -> dict:
    """Mean +/- std of the identified delayed-feedforward response per group,
    with the inverse plant as the reference curve, on the quadrature grid."""
    omega = quadrature_grid()
    ginv = 1.0 / freq_response(plant_d, omega)
    by_group: dict = {}
    for trial in store.iter_trials():
        if trial.divergent or not model_store.has(trial.subject_id, trial.trial_index):
            continue
        if trial.trial_index not in trials:
            continue
        model = model_store.load(trial.subject_id, trial.trial_index, plant_d.ts)
        resp = freq_response(model.ctrl.gff, omega, delay=model.ctrl.tau_ff)
        by_group.setdefault(trial.group, {}).setdefault(trial.trial_index, []).append(resp)
    data = {
        "omega_rad_s": omega.tolist(),
        "inverse_plant": {
            "magnitude": np.abs(ginv).tolist(),
            "phase_deg": np.degrees(np.angle(ginv)).tolist(),
        },
        "groups": {},
    }
    for g, per_trial in sorted(by_group.items()):
        entry = {}
        for t, responses in sorted(per_trial.items()):
            arr = np.array(responses)
            mag = np.abs(arr)
            ph = np.degrees(np.angle(arr))
            entry[str(t)] = {
                "n_models": len(responses),
                "magnitude_mean": mag.mean(axis=0).tolist(),
                "magnitude_std": mag.std(axis=0, ddof=1 if len(responses) > 1 else 0).tolist(),
                "phase_deg_mean": ph.mean(axis=0).tolist(),
                "phase_deg_std": ph.std(axis=0, ddof=1 if len(responses) > 1 else 0).tolist(),
            }
        data["groups"][str(g)] = entry
    return data


def plot_bode(data: dict, group: int, path: Path) -> None:
    fig, (ax_mag, ax_ph) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    omega = np.asarray(data["omega_rad_s"])
    hz = omega / (2 * np.pi)
    ax_mag.plot(hz, data["inverse_plant"]["magnitude"], "k-", lw=2, label="inverse plant")
    ax_ph.plot(hz, data["inverse_plant"]["phase_deg"], "k-", lw=2)
    entry = data["groups"].get(str(group), {})
    styles = {"1": ("tab:gray", "trial 1"), "40": ("tab:blue", "trial 40")}
    for t, series in sorted(entry.items(), key=lambda kv: int(kv[0])):
        color, lbl = styles.get(t, ("tab:purple", f"trial {t}"))
        mag = np.asarray(series["magnitude_mean"])
        mag_sd = np.asarray(series["magnitude_std"])
        ph = np.asarray(series["phase_deg_mean"])
        ph_sd = np.asarray(series["phase_deg_std"])
        ax_mag.plot(hz, mag, color=color, label=lbl)
        ax_mag.fill_between(hz, mag - mag_sd, mag + mag_sd, color=color, alpha=0.25)
        ax_ph.plot(hz, ph, color=color)
        ax_ph.fill_between(hz, ph - ph_sd, ph + ph_sd, color=color, alpha=0.25)
    ax_mag.set_ylabel("magnitude")
    ax_ph.set_ylabel("phase (deg)")
    ax_ph.set_xlabel("frequency (Hz)")
    ax_mag.legend(loc="best", fontsize=8)
    for ax in (ax_mag, ax_ph):
        ax.grid(alpha=0.3)
    fig.suptitle(f"mean identified feedforward, group {group}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def group_statistics(perf_rows: list[MetricRow], buckets=BUCKETS) -> dict:
    """Between-group ANOVA on late performance, Bonferroni-corrected pairwise
    comparisons (a labeled substitute for a studentized-range post hoc), and
    per-group paired tests on the first-to-last change in the
    frequency-domain errors."""
    out: dict = {}
    samples = last_bucket_subject_means(perf_rows, "e_bar", buckets=buckets)
    groups = sorted(samples)
    if len(groups) >= 2 and all(len(samples[g]) >= 2 for g in groups):
        f, p = anova_oneway([samples[g] for g in groups])
        out["anova_last_bucket_e_bar"] = {
            "groups": groups,
            "n_per_group": [len(samples[g]) for g in groups],
            "F": f,
            "p": p,
        }
        out["pairwise_last_bucket_e_bar"] = {
            "method": "two-sample t, Bonferroni-corrected (substitute for a studentized-range post hoc)",
            "pairs": {
                f"{a}-{b}": res
                for (a, b), res in pairwise_bonferroni(samples).items()
            },
        }
    for metric in ("Em", "Ep"):
        first = bucket_subject_means(perf_rows, metric, buckets[0][0], buckets=buckets)
        last = bucket_subject_means(perf_rows, metric, buckets[-1][0], buckets=buckets)
        tests = {}
        for g in sorted(set(first) & set(last)):
            shared = sorted(set(first[g]) & set(last[g]))
            if len(shared) < 2:
                continue
            before = [first[g][s] for s in shared]
            after = [last[g][s] for s in shared]
            t, p = paired_t(before, after)
            tests[str(g)] = {"n": len(shared), "t": t, "p": p}
        out[f"paired_t_change_{metric}"] = tests
    return out


def emit_report(
    store,
    model_store,
    plant_d: DiscreteTF,
    out_dir: Path | str,
    perf_rows: list[MetricRow] | None = None,
    mdl_rows: list[MetricRow] | None = None,
    buckets=BUCKETS,
) -> dict:
    """Write the full bundle; returns a manifest of everything written."""
    from .pipeline import model_rows, performance_rows

    out_dir = Path(out_dir)
    tables = out_dir / "tables"
    plots = out_dir / "plots"
    figures = out_dir / "figures"
    for d in (tables, plots, figures):
        d.mkdir(parents=True, exist_ok=True)

    perf_rows = perf_rows if perf_rows is not None else performance_rows(store)
    mdl_rows = (
        mdl_rows
        if mdl_rows is not None
        else (model_rows(store, model_store, plant_d) if model_store is not None else [])
    )
    bundle = {"tables": [], "plots": [], "figures": []}

    div_table = divergent_counts(perf_rows, buckets=buckets)
    write_divergent_table(div_table, tables / "divergent_counts.csv", buckets=buckets)
    bundle["tables"].append("divergent_counts.csv")

    write_trial_metrics(perf_rows, ["e_bar", "Em", "Ep"], tables / "trial_metrics.csv")
    bundle["tables"].append("trial_metrics.csv")
    write_trial_metrics(
        mdl_rows,
        ["J", "vaf", "ff_gap", "fb_norm", "Me", "Pe", "T_ff", "T_fb"],
        tables / "model_metrics.csv",
    )
    bundle["tables"].append("model_metrics.csv")

    row_source = {"e_bar": perf_rows, "Em": perf_rows, "Ep": perf_rows}
    for metric, (stem, label, include_change) in METRIC_SPECS.items():
        rows = row_source.get(metric, mdl_rows)
        if not rows:
            # keep the bundle schema-valid on an empty store
            summary = GroupSummary(
                metric=metric, groups=(), n_trials=40,
                bucket_labels=tuple(label for label, _, _ in buckets),
            )
        else:
            summary = aggregate(rows, metric, buckets=buckets)
        write_bucket_table(summary, tables / f"mean_{stem}.csv", include_change)
        bundle["tables"].append(f"mean_{stem}.csv")
        (plots / f"series_{stem}.json").write_text(
            json.dumps(summary_series(summary), indent=2)
        )
        bundle["plots"].append(f"series_{stem}.json")
        plot_summary(summary, label, figures / f"mean_{stem}.png")
        bundle["figures"].append(f"mean_{stem}.png")

    bode = feedforward_bode_data(store, model_store, plant_d) if model_store else {
        "omega_rad_s": quadrature_grid().tolist(),
        "inverse_plant": {"magnitude": [], "phase_deg": []},
        "groups": {},
    }
    (plots / "feedforward_bode.json").write_text(json.dumps(bode, indent=2))
    bundle["plots"].append("feedforward_bode.json")
    for g in sorted(int(k) for k in bode["groups"]) or []:
        plot_bode(bode, g, figures / f"feedforward_bode_group{g}.png")
        bundle["figures"].append(f"feedforward_bode_group{g}.png")

    stats = group_statistics(perf_rows, buckets=buckets) if perf_rows else {}
    (plots / "statistics.json").write_text(json.dumps(stats, indent=2))
    bundle["plots"].append("statistics.json")

    (out_dir / "report_manifest.json").write_text(json.dumps(bundle, indent=2))
    log.info("report bundle written to %s", out_dir)
    return bundle
