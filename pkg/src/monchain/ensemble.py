"""Ensemble orchestration: reproducible seeding, worker pools, persistence.

Per-trajectory random streams are spawned from the master seed, so a run
is a pure function of its config: the same fingerprint always produces
byte-identical record and summary files, whatever the worker count. All
file writing happens in the parent process, in trajectory-index order.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import stats
from .config import SimConfig, fingerprint, to_flat_dict
from .errors import ConfigError
from .stats import EnsembleSummary, ensemble_average
from .trajectory import (
    TrajectoryRecord,
    record_from_files,
    run_trajectory,
    write_events_jsonl,
    write_series_csv,
)

PACKAGE_VERSION = "0.1.0"


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Deterministic, splittable per-trajectory seed."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _run_indexed(args) -> TrajectoryRecord:
    config, index = args
    rng = np.random.default_rng(trajectory_seed(config.master_seed, index))
    return run_trajectory(config, rng, seed_key=index)


@dataclass
class EnsembleResult:
    manifest: dict
    records: list[TrajectoryRecord]
    summary: EnsembleSummary | None
    out_path: Path | None


def run_ensemble(
    config: SimConfig, workers: int = 1, out_root: str | Path | None = None
) -> EnsembleResult:
    """Run config.n_trajectories trajectories, average them, optionally persist.

    Individual trajectory failures are isolated: surviving records are
    still averaged and persisted, and the manifest is marked incomplete.
    """
    n = config.n_trajectories
    jobs = [(config, i) for i in range(n)]
    results: list[TrajectoryRecord | None] = [None] * n
    errors: dict[int, str] = {}
    if workers <= 1 or n == 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _run_indexed(job)
            except Exception as exc:  # noqa: BLE001 - isolate per-trajectory faults
                errors[i] = f"{type(exc).__name__}: {exc}"
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_run_indexed, job) for i, job in enumerate(jobs)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    errors[i] = f"{type(exc).__name__}: {exc}"
    records = [r for r in results if r is not None]
    summary = ensemble_average(records) if records else None

    fp = fingerprint(config)
    seeds = [trajectory_seed(config.master_seed, i) for i in range(n)]
    manifest = {
        "fingerprint": fp,
        "version": PACKAGE_VERSION,
        "created": datetime.now(timezone.utc).isoformat(),
        "config": to_flat_dict(config),
        "seeds": [
            {"index": i, "state": [int(x) for x in s.generate_state(4)]}
            for i, s in enumerate(seeds)
        ],
        "complete": not errors,
        "failed": {str(k): v for k, v in sorted(errors.items())},
        "files": [],
    }

    out_path = None
    if out_root is not None:
        out_path = Path(out_root) / fp
        out_path.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(results):
            if rec is None:
                continue
            csv_name = f"traj_{i:04d}.csv"
            ev_name = f"traj_{i:04d}.events.jsonl"
            write_series_csv(rec, out_path / csv_name)
            write_events_jsonl(rec, out_path / ev_name)
            manifest["files"] += [csv_name, ev_name]
        if summary is not None:
            write_summary_json(summary, out_path / "summary.json")
            manifest["files"].append("summary.json")
        (out_path / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return EnsembleResult(manifest, records, summary, out_path)


def write_summary_json(summary: EnsembleSummary, path: str | Path):
    payload = {
        "fingerprint": summary.fingerprint,
        "count": summary.count,
        "sample_times": summary.sample_times.tolist(),
        "subsystem_sizes": list(summary.subsystem_sizes),
        "means": {k: v.tolist() for k, v in summary.means.items()},
        "m2s": {k: v.tolist() for k, v in summary.m2s.items()},
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def read_summary_json(path: str | Path) -> EnsembleSummary:
    d = json.loads(Path(path).read_text())
    return EnsembleSummary(
        fingerprint=d["fingerprint"],
        sample_times=np.array(d["sample_times"], dtype=float),
        subsystem_sizes=tuple(d["subsystem_sizes"]),
        count=d["count"],
        means={k: np.array(v, dtype=float) for k, v in d["means"].items()},
        m2s={k: np.array(v, dtype=float) for k, v in d["m2s"].items()},
    )


def load_run(run_dir: str | Path):
    """Reload (manifest, records, summary) from a persisted run directory."""
    from .config import config_from_flat

    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    config = config_from_flat(manifest["config"])
    end_time = config.n_steps * config.dt
    records = []
    for csv_path in sorted(run_dir.glob("traj_*.csv")):
        idx = int(csv_path.stem.split("_")[1])
        records.append(
            record_from_files(
                csv_path,
                csv_path.with_suffix("").with_suffix(".events.jsonl"),
                fingerprint=manifest["fingerprint"],
                protocol=config.protocol,
                seed_key=idx,
                end_time=end_time,
            )
        )
    summary_path = run_dir / "summary.json"
    summary = read_summary_json(summary_path) if summary_path.exists() else None
    return manifest, records, summary


# ---------------------------------------------------------------------------
# parameter sweeps

SWEEP_AXES = ("gamma", "ell", "deltaT", "L", "n_monitored")


def _point_config(config: SimConfig, axis: str, value) -> SimConfig:
    if axis == "gamma":
        return config.replace(gamma=float(value))
    if axis == "deltaT":
        return config.replace(protocol="fixed_interval", delta_t=float(value))
    if axis == "L":
        L = int(value)
        return config.replace(
            L=L, subsystem_sizes=[max(L // 4, 1)], event_ell=None
        )
    if axis == "n_monitored":
        return config.replace(monitored_sites=list(range(int(value))))
    raise ConfigError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepResult:
    axis: str
    values: list
    summaries: list[EnsembleSummary | None]
    series: stats.ScalarSeries
    details: dict
    errors: dict


def sweep(
    config: SimConfig,
    axis: str,
    values,
    workers: int = 1,
    out_root: str | Path | None = None,
) -> SweepResult:
    """Run one ensemble per axis value and apply the matching reduction.

    gamma / n_monitored -> waiting-time ratio per value, ell -> late-time
    entropy scaling (single ensemble carrying all sizes), deltaT -> growth
    velocity per interval, L -> saturation time per size.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    details: dict = {}
    errors: dict = {}

    if axis == "ell":
        # one ensemble computes every subsystem size at once
        cfg = config.replace(subsystem_sizes=[int(v) for v in values], event_ell=None)
        res = run_ensemble(cfg, workers=workers, out_root=out_root)
        fit = stats.steady_scaling(res.summary)
        details["scaling_fit"] = fit
        return SweepResult(axis, values, [res.summary], fit.series, details, errors)

    summaries: list[EnsembleSummary | None] = []
    ys = []
    for v in values:
        try:
            cfg = _point_config(config, axis, v)
            res = run_ensemble(cfg, workers=workers, out_root=out_root)
            summaries.append(res.summary)
            if axis in ("gamma", "n_monitored"):
                gamma_pt = cfg.lattice.gamma
                split = cfg.tau_split if cfg.tau_split is not None else 5.0 / gamma_pt
                wtd = stats.waiting_time_stats(res.records, tau_split=split)
                details.setdefault("wtd", []).append(wtd)
                ys.append(wtd.ratio)
            elif axis == "deltaT":
                fit = stats.growth_velocity(
                    res.summary, cfg.subsystem_sizes[0], fit_window=cfg.fit_window
                )
                details.setdefault("velocity", []).append(fit)
                ys.append(fit.velocity)
            elif axis == "L":
                sat = stats.saturation_time(
                    res.summary,
                    cfg.subsystem_sizes[0],
                    cfg.epsilons[0],
                    cfg.kernel_width,
                )
                details.setdefault("saturation", []).append(sat)
                ys.append(sat.tau_inf)
        except Exception as exc:  # noqa: BLE001 - isolate per-point failures
            errors[v] = f"{type(exc).__name__}: {exc}"
            summaries.append(None)
            ys.append(float("nan"))
    order = np.argsort(np.asarray(values, dtype=float))
    series = stats.ScalarSeries(
        np.asarray(values, dtype=float)[order], np.asarray(ys, dtype=float)[order]
    )
    return SweepResult(axis, values, summaries, series, details, errors)
