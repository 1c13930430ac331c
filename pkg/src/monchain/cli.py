"""Command-line front end.

Subcommands: run (one ensemble), sweep (parameter scan), stats (re-reduce a
persisted run), report (figures for a persisted run), validate (fast
exact-oracle self-checks).  Exit codes: 0 ok, 2 config error, 3 numerical
integrity error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig, config_from_flat, parse_config
from .errors import ConfigError, NumericalIntegrityError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monchain",
                                description="Monitored free-fermion chain simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config_flags(sp):
        sp.add_argument("--config", type=str, help="JSON config file")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", type=str, help="output root directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any flat config field (repeatable)")
        for flag in ("L", "J", "gamma", "nu", "dt", "t_max", "protocol",
                     "delta_t", "n_trajectories"):
            sp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=str)

    sp_run = sub.add_parser("run", help="run one ensemble and persist it")
    add_config_flags(sp_run)

    sp_sweep = sub.add_parser("sweep", help="scan one axis and reduce")
    add_config_flags(sp_sweep)
    sp_sweep.add_argument("--axis", required=True,
                          choices=("gamma", "ell", "deltaT", "L", "n_monitored"))
    sp_sweep.add_argument("--values", required=True,
                          help="comma-separated axis values")

    sp_stats = sub.add_parser("stats", help="re-reduce a persisted run")
    sp_stats.add_argument("--run", required=True, help="run directory")

    sp_report = sub.add_parser("report", help="emit figures for a persisted run")
    sp_report.add_argument("--run", required=True, help="run directory")

    sub.add_parser("validate", help="run the small-system oracle checks")
    return p


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config_from_args(args) -> SimConfig:
    overrides = {}
    for flag in ("L", "J", "gamma", "nu", "dt", "t_max", "protocol",
                 "delta_t", "n_trajectories"):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[flag] = _coerce(val)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = _coerce(val.strip())
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.config:
        return parse_config(args.config, overrides)
    return config_from_flat(overrides)


def _cmd_run(args) -> int:
    from .ensemble import run_ensemble

    config = _config_from_args(args)
    result = run_ensemble(config, workers=args.workers, out_root=config.out_dir)
    print(f"run {result.manifest['fingerprint']}: "
          f"{len(result.records)}/{config.n_trajectories} trajectories -> "
          f"{result.out_path}")
    if not result.manifest["complete"]:
        print(f"incomplete: failures {result.manifest['failed']}", file=sys.stderr)
        return 3
    return 0


def _cmd_sweep(args) -> int:
    from .ensemble import sweep

    config = _config_from_args(args)
    values = [_coerce(v) for v in args.values.split(",")]
    result = sweep(config, args.axis, values, workers=args.workers,
                   out_root=config.out_dir)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "axis": result.axis,
        "values": result.values,
        "x": result.series.x.tolist(),
        "y": result.series.y.tolist(),
        "errors": {str(k): v for k, v in result.errors.items()},
    }
    sweep_file = out / f"sweep_{args.axis}.json"
    sweep_file.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"sweep {args.axis}: {len(values)} points -> {sweep_file}")
    for x, y in zip(result.series.x, result.series.y):
        print(f"  {args.axis}={x:g}: {y:.6g}")
    return 0 if not result.errors else 3


def _cmd_stats(args) -> int:
    from . import stats
    from .ensemble import load_run, write_summary_json
    from .stats import ensemble_average

    run_dir = Path(args.run)
    manifest, records, _ = load_run(run_dir)
    if not records:
        raise ConfigError(f"no trajectory files in {run_dir}")
    summary = ensemble_average(records)
    write_summary_json(summary, run_dir / "summary.json")
    out = {"fingerprint": manifest["fingerprint"], "count": summary.count}
    events = stats.real_events(records)
    if events:
        gamma = manifest["config"].get("gamma", 0.0)
        split = 5.0 / gamma if gamma else None
        wtd = stats.waiting_time_stats(records, tau_split=split)
        out["waiting_time"] = {
            "mean": wtd.mean, "std": wtd.std, "ratio": wtd.ratio,
            "dark_mean": wtd.dark_mean, "n_events": wtd.n_events,
        }
        h_jump, h_drift = stats.jump_change_histograms(records)
        out["entropy_change_moments"] = {
            "jump": [h_jump.mean, h_jump.std, h_jump.third_moment],
            "noclick_rate": [h_drift.mean, h_drift.std, h_drift.third_moment],
        }
    (run_dir / "stats.json").write_text(json.dumps(out, indent=1) + "\n")
    print(f"stats -> {run_dir / 'stats.json'}")
    return 0


def _cmd_report(args) -> int:
    from .report import report_run

    written = report_run(args.run)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_validate(_args) -> int:
    """Fast correctness checks against closed forms and the exact oracle."""
    import warnings

    from . import fockspace
    from .errors import OpenShellWarning
    from .gaussian import (
        entanglement_entropy, fock_oracle_expand, occupation,
    )
    from .gaussian import energy as energy_of
    from .lattice import LatticeSpec, build_hopping, fermi_sea
    from .trajectory import run_quantum_jump_trajectory

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"  [{'ok' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    spec = LatticeSpec(L=4, J=0.5, nu=0.25, gamma=0.5)
    h0 = build_hopping(spec)
    evs = np.linalg.eigvalsh(h0.matrix)
    check("hopping band structure (L=4)",
          np.allclose(sorted(evs), [-1.0, 0.0, 0.0, 1.0], atol=1e-12))

    sea = fermi_sea(spec)
    check("fermi sea occupations", abs(occupation(sea, 2) - 0.25) < 1e-12)
    s1 = entanglement_entropy(sea, 1)
    target = -0.25 * np.log(0.25) - 0.75 * np.log(0.75)
    check("fermi sea single-site entropy", abs(s1 - target) < 1e-10)
    check("fermi sea energy", abs(energy_of(sea, h0) + 1.0) < 1e-12)

    psi = fock_oracle_expand(sea)
    check("slater expansion norm", abs(np.linalg.norm(psi) - 1.0) < 1e-10)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OpenShellWarning)
        cfg = config_from_flat({
            "L": 6, "J": 0.5, "nu": 0.5, "gamma": 0.5,
            "protocol": "quantum_jump", "t_max": 5.0, "dt": 0.05,
            "sample_interval": 0.25, "subsystem_sizes": [2, 3],
        })
        rec = run_quantum_jump_trajectory(cfg, np.random.default_rng(7))
        h_nh = h0.matrix  # rebuilt below at L=6
        from .lattice import build_monitored_hamiltonian

        h6 = build_hopping(cfg.lattice)
        hnh = build_monitored_hamiltonian(h6, cfg.lattice)
        m_many = fockspace.step_propagator(hnh.matrix, cfg.dt)
        psi = fockspace.slater_amplitudes(fermi_sea(cfg.lattice).U)
        ev_by_step = {}
        for ev in rec.events:
            ev_by_step.setdefault(int(round(ev.time / cfg.dt)), []).append(ev.site)
        worst = 0.0
        sample_idx = 1
        for step in range(1, cfg.n_steps + 1):
            psi = m_many @ psi
            psi /= np.linalg.norm(psi)
            for site in ev_by_step.get(step, ()):
                psi = fockspace.project_number(psi, cfg.lattice.L, site, 1)
            if step % cfg.steps_per_sample == 0:
                for a, ell in enumerate(cfg.subsystem_sizes):
                    exact = fockspace.entanglement_entropy(psi, cfg.lattice.L, ell)
                    worst = max(worst, abs(exact - rec.entropies[a, sample_idx]))
                sample_idx += 1
        check(f"gaussian vs exact trajectory (L=6, max dev {worst:.2e})",
              worst < 1e-7)

    print("validate:", "all checks passed" if failures == 0 else f"{failures} FAILED")
    return 0 if failures == 0 else 3


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "stats": _cmd_stats,
        "report": _cmd_report,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalIntegrityError as exc:
        print(f"numerical integrity error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
