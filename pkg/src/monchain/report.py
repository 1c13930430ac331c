"""Figure emission: self-contained SVG plots with the data CSV alongside."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stats import EnsembleSummary, Histogram, ScalarSeries


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    rows = ["\t".join(header)]
    for vals in zip(*columns):
        rows.append("\t".join(repr(float(v)) for v in vals))
    path.write_text("\n".join(rows) + "\n")


def figure_summary(
    summary: EnsembleSummary,
    out_svg: str | Path,
    baseline: bool = False,
    logy: bool = False,
) -> Path:
    """Averaged entropy dynamics per subsystem size, with stderr bands."""
    out_svg = Path(out_svg)
    t = summary.sample_times
    fig, ax = plt.subplots(figsize=(6, 4))
    header, cols = ["t"], [t]
    for ell in summary.subsystem_sizes:
        name = f"S_ell{ell}"
        y = summary.baseline_subtracted(name) if baseline else summary.mean(name)
        err = summary.stderr(name)
        ax.plot(t, y, label=f"$\\ell={ell}$")
        if summary.count > 1:
            ax.fill_between(t, y - err, y + err, alpha=0.25, linewidth=0)
        header += [name, name + "_stderr"]
        cols += [y, err]
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\bar{S}(t) - \bar{S}(0)$" if baseline else r"$\bar{S}(t)$")
    if logy:
        ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_svg)
    plt.close(fig)
    _write_csv(out_svg.with_suffix(".csv"), header, cols)
    return out_svg


def figure_histogram(
    hist: Histogram,
    out_svg: str | Path,
    xlabel: str = "value",
    logy: bool = True,
) -> Path:
    out_svg = Path(out_svg)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if not hist.empty:
        centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])
        widths = np.diff(hist.bin_edges)
        ax.bar(centers, hist.density, width=widths, align="center",
               edgecolor="black", linewidth=0.4)
        _write_csv(
            out_svg.with_suffix(".csv"),
            ["bin_left", "bin_right", "count", "density"],
            [hist.bin_edges[:-1], hist.bin_edges[1:],
             hist.counts.astype(float), hist.density],
        )
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    ax.set_title(f"n={hist.n}, mean={hist.mean:.4g}, std={hist.std:.4g}")
    fig.tight_layout()
    fig.savefig(out_svg)
    plt.close(fig)
    return out_svg


def figure_series(
    series: ScalarSeries,
    out_svg: str | Path,
    xlabel: str = "x",
    ylabel: str = "y",
    fit: tuple[float, float] | None = None,
    logx: bool = False,
    logy: bool = False,
) -> Path:
    """Scatter of a ScalarSeries, optional (slope, intercept) fit-line overlay."""
    out_svg = Path(out_svg)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if series.yerr is not None:
        ax.errorbar(series.x, series.y, yerr=series.yerr, fmt="o", capsize=2)
    else:
        ax.plot(series.x, series.y, "o")
    if fit is not None:
        slope, intercept = fit
        xs = np.linspace(series.x.min(), series.x.max(), 50)
        ax.plot(xs, intercept + slope * xs, "-", alpha=0.7,
                label=f"slope {slope:.3g}")
        ax.legend(frameon=False)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_svg)
    plt.close(fig)
    cols = [series.x, series.y] + ([series.yerr] if series.yerr is not None else [])
    _write_csv(out_svg.with_suffix(".csv"),
               ["x", "y"] + (["yerr"] if series.yerr is not None else []), cols)
    return out_svg


def report_run(run_dir: str | Path) -> list[Path]:
    """Standard figure set for a persisted run directory."""
    from . import stats
    from .ensemble import load_run

    run_dir = Path(run_dir)
    manifest, records, summary = load_run(run_dir)
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written = []
    if summary is not None:
        written.append(figure_summary(summary, fig_dir / "entropy_mean.svg"))
        written.append(
            figure_summary(summary, fig_dir / "entropy_growth.svg", baseline=True)
        )
    events = stats.real_events(records)
    if events:
        gamma = manifest["config"].get("gamma", 0.0)
        split = 5.0 / gamma if gamma else None
        wtd = stats.waiting_time_stats(records, tau_split=split)
        written.append(
            figure_histogram(wtd.histogram, fig_dir / "waiting_times.svg",
                             xlabel=r"$\tau$")
        )
        h_jump, h_drift = stats.jump_change_histograms(records)
        written.append(
            figure_histogram(h_jump, fig_dir / "entropy_change_jumps.svg",
                             xlabel=r"$\Delta S_{qj}$")
        )
        written.append(
            figure_histogram(h_drift, fig_dir / "entropy_rate_noclick.svg",
                             xlabel=r"$\Delta S_{nH}/\tau$")
        )
    return written
