"""Command-line entry points.

Subcommands: refgen, simulate, ssid, report, serve. Everything is driven by
an optional TOML config; defaults reproduce the standard protocol (50 Hz,
60-s trials, 40 trials per subject, 4 preview groups of 11). Results go to
files; logs go to stderr. Exit codes: 0 success, 2 configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:   # Python 3.10
    import tomli as tomllib

log = logging.getLogger("previewtrack")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

DEFAULT_CONFIG = {
    "experiment": {
        "ts": 0.02,
        "n": 3000,
        "trials_per_subject": 40,
        "divergence_bound": 4.4,
        "master_seed": 20260810,
        "input_gain": 1.0,
    },
    "cohort": {
        "subjects_per_group": 11,
        "sensory_delay_s": 0.3,
        "quality_start": 0.25,
        "learning_tau": 8.0,
        "quality_ceiling": {"g1": 0.30, "g2": 0.80, "g3": 0.95, "g4": 0.90},
        "wild_subjects": {"g1": 3, "g2": 2, "g3": 1, "g4": 2},
        "wild_trials": 2,
        "wild_fb_scale": 6.0,
    },
    "ssid": {"weighting": "none"},
    "pools": {
        "gain_min": 0.1,
        "gain_max": 3.0,
        "gain_count": 12,
        "fir_zeros": [0.80, 0.90, 0.95, 0.99],
        # each pair is [[re, im], [re, im]]; complex poles must be conjugates
        "pole_pairs": [
            [[0.5, 0.0], [0.5, 0.0]],
            [[0.7, 0.0], [0.7, 0.0]],
            [[0.85, 0.0], [0.85, 0.0]],
            [[0.95, 0.0], [0.6, 0.0]],
            [[0.9, 0.2], [0.9, -0.2]],
            [[0.8, 0.3], [0.8, -0.3]],
            [[0.6, 0.5], [0.6, -0.5]],
            [[0.3, 0.0], [0.9, 0.0]],
        ],
        "tau_fb": [5, 25],
        "tau_ff": [0, 25],
    },
    "analysis": {
        "buckets": [[1, 5], [6, 10], [11, 20], [21, 30], [31, 35], [36, 40]],
    },
    "serve": {"host": "127.0.0.1", "port": 8000, "store": "live_store"},
}


class ConfigError(RuntimeError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be a table")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return DEFAULT_CONFIG
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            user = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {p}: {exc}")
    return _merge(DEFAULT_CONFIG, user)


def experiment_config(conf: dict):
    from .loop import ExperimentConfig

    e = conf["experiment"]
    return ExperimentConfig(
        ts=float(e["ts"]),
        n=int(e["n"]),
        divergence_bound=float(e["divergence_bound"]),
        trials_per_subject=int(e["trials_per_subject"]),
        input_gain=float(e["input_gain"]),
    )


def cohort_specs(conf: dict):
    from .pipeline import SubjectSpec

    c = conf["cohort"]
    specs = []
    for group in (1, 2, 3, 4):
        ceiling = float(c["quality_ceiling"][f"g{group}"])
        wild_n = int(c["wild_subjects"][f"g{group}"])
        for j in range(1, int(c["subjects_per_group"]) + 1):
            # same deterministic within-group spread as pipeline.default_cohort
            specs.append(
                SubjectSpec(
                    subject_id=f"g{group}s{j:02d}",
                    group=group,
                    sensory_delay_s=float(c["sensory_delay_s"]),
                    quality_start=float(c["quality_start"]) - 0.01 * (j % 3),
                    quality_ceiling=ceiling - 0.004 * (j - 1),
                    learning_tau=float(c["learning_tau"]) + 0.5 * ((j - 1) % 5),
                    wild_trials=int(c["wild_trials"]) if j <= wild_n else 0,
                    wild_fb_scale=float(c["wild_fb_scale"]),
                )
            )
    return specs


def pool_grid(conf: dict):
    from .ssid import PoolGrid

    p = conf["pools"]
    try:
        pairs = tuple(
            (complex(a[0], a[1]), complex(b[0], b[1])) for a, b in p["pole_pairs"]
        )
        return PoolGrid(
            gain_min=float(p["gain_min"]),
            gain_max=float(p["gain_max"]),
            gain_count=int(p["gain_count"]),
            fir_zeros=tuple(float(z) for z in p["fir_zeros"]),
            pole_pairs=pairs,
            tau_fb_range=(int(p["tau_fb"][0]), int(p["tau_fb"][1])),
            tau_ff_range=(int(p["tau_ff"][0]), int(p["tau_ff"][1])),
        )
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid [pools] table: {exc}")


def analysis_buckets(conf: dict):
    from .pipeline import make_buckets

    try:
        return make_buckets(conf["analysis"]["buckets"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [analysis].buckets: {exc}")


def _ensure_fresh_dir(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise FileExistsError(f"{path} exists and is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)


def cmd_refgen(args) -> int:
    from . import refgen

    conf = load_config(args.config)
    out = Path(args.out)
    try:
        _ensure_fresh_dir(out, args.force)
    except FileExistsError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",")]
        except ValueError:
            log.error("invalid seed list %r (comma-separated integers)", args.seeds)
            return EXIT_CONFIG
    else:
        from .pipeline import reference_seeds

        seeds = reference_seeds(conf["experiment"]["master_seed"], args.count)
    for i, seed in enumerate(seeds, start=1):
        cmd = refgen.generate(seed)
        (out / f"reference_{i:03d}.json").write_text(cmd.to_json())
    log.info("wrote %d reference files to %s", len(seeds), out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .pipeline import reference_seeds, run_experiment
    from .store import TrialStore

    conf = load_config(args.config)
    cfg = experiment_config(conf)
    subjects = cohort_specs(conf)
    seeds = reference_seeds(conf["experiment"]["master_seed"], cfg.trials_per_subject)
    store = TrialStore(args.out)
    done = {"count": 0}

    def progress(subject_id, trial_index):
        done["count"] += 1
        if done["count"] % 40 == 0:
            log.info("simulated %d trials (last: %s/%03d)", done["count"], subject_id, trial_index)

    try:
        run_experiment(cfg, subjects, store, seeds, progress=progress)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    log.info("trial store complete at %s", args.out)
    return EXIT_OK


def cmd_ssid(args) -> int:
    from .lti import zoh_discretize
    from .loop import default_plant
    from .pipeline import identify_store
    from .ssid import default_pools
    from .store import IdentifiedModelStore, TrialStore

    conf = load_config(args.config)
    store = TrialStore(args.store)
    if not (store.root / "manifest.json").exists():
        log.error("no trial store at %s", args.store)
        return EXIT_DATA
    cfg = experiment_config(conf)
    plant_d = zoh_discretize(default_plant(), cfg.ts)
    weighting = "inverse-magnitude" if args.weighted else conf["ssid"]["weighting"]
    model_store = IdentifiedModelStore(args.out)
    log.info("building candidate pools")
    pools = default_pools(plant_d, grid=pool_grid(conf))
    log.info("%d feedback candidates x %d delays", len(pools.feedback), len(pools.tau_ffs))
    done = {"count": 0}

    def progress(subject_id, trial_index):
        done["count"] += 1
        if done["count"] % 10 == 0:
            log.info("identified %d trials", done["count"])

    identify_store(store, model_store, plant_d, pools=pools, weighting=weighting, progress=progress)
    log.info("identified-model store complete at %s", args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    from .lti import zoh_discretize
    from .loop import default_plant
    from .report import emit_report
    from .store import IdentifiedModelStore, TrialStore

    conf = load_config(args.config)
    buckets = analysis_buckets(conf)
    cfg = experiment_config(conf)
    store = TrialStore(args.store)
    if not store.root.exists():
        log.error("no trial store at %s", args.store)
        return EXIT_DATA
    out = Path(args.out)
    try:
        _ensure_fresh_dir(out, args.force)
    except FileExistsError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    plant_d = zoh_discretize(default_plant(), cfg.ts)
    model_store = IdentifiedModelStore(args.models) if args.models else None
    bundle = emit_report(store, model_store, plant_d, out, buckets=buckets)
    log.info(
        "report bundle: %d tables, %d plot series, %d figures",
        len(bundle["tables"]), len(bundle["plots"]), len(bundle["figures"]),
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    conf = load_config(args.config)
    serve = conf["serve"]
    host = args.host or serve["host"]
    port = args.port or int(serve["port"])
    app = create_app(
        cfg=experiment_config(conf),
        store_root=args.store or serve["store"],
        master_seed=conf["experiment"]["master_seed"],
    )
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    except (OSError, SystemExit) as exc:
        # uvicorn reports bind failures via SystemExit
        log.error("cannot serve on %s:%d: %s", host, port, exc)
        return EXIT_DATA
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="previewtrack",
        description="Preview tracking experiments: generate, simulate, identify, report, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refgen", help="write reference-command JSON files")
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--seeds", help="comma-separated seed list overriding the schedule")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_refgen)

    p = sub.add_parser("simulate", help="simulate a synthetic cohort into a trial store")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ssid", help="identify controllers for every non-divergent trial")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--weighted", action="store_true", help="use inverse-magnitude weighting")
    p.set_defaults(func=cmd_ssid)

    p = sub.add_parser("report", help="emit tables, plot series, and figures")
    p.add_argument("--store", required=True)
    p.add_argument("--models")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the live-trial session service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--store")
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
