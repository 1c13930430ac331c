"""Ensemble reductions: averaged dynamics, waiting-time and event statistics.

All reductions are pure functions over collections of TrajectoryRecords.
Histograms carry their moments computed from the raw pooled samples (never
from the binned counts); ensemble summaries keep running (count, mean, M2)
triples so partial summaries merge associatively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .trajectory import JumpEvent, TrajectoryRecord

TAIL_FRACTION = 0.2  # portion of the series used for late-time averages


# ---------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class Histogram:
    """Binned empirical distribution plus exact sample moments."""

    bin_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    mean: float
    std: float
    third_moment: float
    n: int

    @classmethod
    def from_samples(cls, samples, bins=None) -> "Histogram":
        x = np.asarray(samples, dtype=float)
        if x.size == 0:
            return cls(np.array([]), np.array([]), np.array([]),
                       float("nan"), float("nan"), float("nan"), 0)
        if bins is None:
            edges = np.histogram_bin_edges(x, bins="fd")
        elif np.isscalar(bins):
            edges = np.histogram_bin_edges(x, bins=int(bins))
        else:
            edges = np.asarray(bins, dtype=float)
        counts, _ = np.histogram(x, bins=edges)
        density, _ = np.histogram(x, bins=edges, density=True)
        mu = float(x.mean())
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        m3 = float(np.mean((x - mu) ** 3))
        return cls(edges, counts, density, mu, sd, m3, int(x.size))

    @property
    def empty(self) -> bool:
        return self.n == 0


@dataclass(frozen=True)
class ScalarSeries:
    """Sorted (x, y) pairs with optional errors; NaN marks empty bins."""

    x: np.ndarray
    y: np.ndarray
    yerr: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape:
            raise ValueError("abscissa and ordinate lengths differ")
        if x.size > 1 and np.any(np.diff(x) < 0):
            raise ValueError("abscissa must be sorted")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.yerr is not None:
            err = np.asarray(self.yerr, dtype=float)
            if err.shape != x.shape:
                raise ValueError("error length differs")
            object.__setattr__(self, "yerr", err)


@dataclass
class EnsembleSummary:
    """Trajectory-averaged observables with merge-friendly running moments."""

    fingerprint: str
    sample_times: np.ndarray
    subsystem_sizes: tuple[int, ...]
    count: int
    means: dict[str, np.ndarray]
    m2s: dict[str, np.ndarray] = field(repr=False)

    def mean(self, name: str) -> np.ndarray:
        return self.means[name]

    def stderr(self, name: str) -> np.ndarray:
        if self.count < 2:
            return np.full_like(self.means[name], np.nan)
        var = self.m2s[name] / (self.count - 1)
        return np.sqrt(np.clip(var, 0.0, None) / self.count)

    def baseline_subtracted(self, name: str) -> np.ndarray:
        m = self.means[name]
        return m - m[0]

    def entropy_mean(self, ell: int) -> np.ndarray:
        return self.means[f"S_ell{ell}"]

    def merge(self, other: "EnsembleSummary") -> "EnsembleSummary":
        if self.fingerprint != other.fingerprint:
            raise ValueError("cannot merge summaries of different configs")
        if not np.array_equal(self.sample_times, other.sample_times):
            raise ValueError("sample grids differ")
        na, nb = self.count, other.count
        n = na + nb
        means, m2s = {}, {}
        for key in self.means:
            delta = other.means[key] - self.means[key]
            means[key] = self.means[key] + delta * (nb / n)
            m2s[key] = self.m2s[key] + other.m2s[key] + delta**2 * (na * nb / n)
        return EnsembleSummary(
            self.fingerprint, self.sample_times, self.subsystem_sizes, n, means, m2s
        )


def _record_observables(record: TrajectoryRecord) -> dict[str, np.ndarray]:
    out = {
        f"S_ell{ell}": record.entropies[a]
        for a, ell in enumerate(record.subsystem_sizes)
    }
    out["E"] = record.energy
    out["n_j0"] = record.occupation_j0
    return out


def ensemble_average(records: list[TrajectoryRecord]) -> EnsembleSummary:
    """Pointwise mean and standard error over records sharing one config."""
    if not records:
        raise ValueError("no records to average")
    first = records[0]
    means = {k: np.array(v, dtype=float) for k, v in _record_observables(first).items()}
    m2s = {k: np.zeros_like(v) for k, v in means.items()}
    n = 1
    for rec in records[1:]:
        if rec.fingerprint != first.fingerprint:
            raise ValueError("records come from different configs")
        if not np.array_equal(rec.sample_times, first.sample_times):
            raise ValueError("records have mismatched sample grids")
        n += 1
        for key, series in _record_observables(rec).items():
            delta = series - means[key]
            means[key] = means[key] + delta / n
            m2s[key] = m2s[key] + delta * (series - means[key])
    return EnsembleSummary(
        fingerprint=first.fingerprint,
        sample_times=np.array(first.sample_times, dtype=float),
        subsystem_sizes=tuple(first.subsystem_sizes),
        count=n,
        means=means,
        m2s=m2s,
    )


# ---------------------------------------------------------------------------
# event pooling

def real_events(records) -> list[JumpEvent]:
    """All non-skipped events pooled across records, in record order."""
    return [ev for rec in records for ev in rec.events if not ev.skipped]


def consecutive_event_pairs(records) -> list[tuple[JumpEvent, JumpEvent]]:
    """Pairs (event, next event) within each record (non-skipped only).

    The second member's ds_nh is the deterministic entropy gain in the
    interval that separates the pair.
    """
    pairs = []
    for rec in records:
        evs = [ev for ev in rec.events if not ev.skipped]
        pairs.extend(zip(evs[:-1], evs[1:]))
    return pairs


@dataclass(frozen=True)
class WaitingTimeStats:
    histogram: Histogram
    mean: float
    std: float
    ratio: float  # std/mean; > 1 flags super-Poissonian statistics
    dark_mean: float  # mean waiting time of the long-tail component
    tau_split: float
    n_events: int


def waiting_time_stats(records, bins=None, tau_split=None) -> WaitingTimeStats:
    """Pooled waiting-time distribution with its two-timescale summary.

    `tau_split` separates the short (bunching) component from the long
    (dark-interval) tail; the default is 5/gamma-like and must be passed
    explicitly when gamma is unknown here, so None falls back to 5x the
    pooled mean.
    """
    taus = np.array([ev.tau for ev in real_events(records)], dtype=float)
    if taus.size == 0:
        raise ValueError("no events in the given records")
    hist = Histogram.from_samples(taus, bins=bins)
    mu = float(taus.mean())
    sd = float(taus.std(ddof=1)) if taus.size > 1 else 0.0
    split = float(tau_split) if tau_split is not None else 5.0 * mu
    tail = taus[taus > split]
    dark = float(tail.mean()) if tail.size else float("nan")
    return WaitingTimeStats(
        histogram=hist,
        mean=mu,
        std=sd,
        ratio=sd / mu if mu > 0 else float("nan"),
        dark_mean=dark,
        tau_split=split,
        n_events=int(taus.size),
    )


def fano_ratio_stderr(records, tau_split=None) -> tuple[float, float]:
    """std/mean of the pooled WTD plus a jackknife (leave-one-record-out) error."""
    full = waiting_time_stats(records, tau_split=tau_split).ratio
    loo = []
    for i in range(len(records)):
        subset = records[:i] + records[i + 1 :]
        try:
            loo.append(waiting_time_stats(subset, tau_split=tau_split).ratio)
        except ValueError:
            continue
    loo = np.array(loo)
    if loo.size < 2:
        return full, float("nan")
    n = loo.size
    se = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    return full, se


def jump_change_histograms(records, bins=None) -> tuple[Histogram, Histogram]:
    """P(dS_qj) over jumps and P(dS_nH / tau) over the preceding intervals."""
    evs = real_events(records)
    if not evs:
        raise ValueError("no events in the given records")
    ds_jump = np.array([ev.ds_qj for ev in evs])
    rates = np.array([ev.ds_nh / ev.tau for ev in evs if ev.tau > 0])
    return Histogram.from_samples(ds_jump, bins=bins), Histogram.from_samples(rates, bins=bins)


def conditioned_jump_stats(records, tau_bins) -> ScalarSeries:
    """Mean entropy change of a jump, binned by the waiting time before it."""
    evs = real_events(records)
    taus = np.array([ev.tau for ev in evs])
    ds = np.array([ev.ds_qj for ev in evs])
    if np.isscalar(tau_bins):
        edges = np.histogram_bin_edges(taus, bins=int(tau_bins))
    else:
        edges = np.asarray(tau_bins, dtype=float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    means = np.full(centers.shape, np.nan)
    errs = np.full(centers.shape, np.nan)
    idx = np.digitize(taus, edges) - 1
    idx = np.clip(idx, 0, len(centers) - 1)
    for b in range(len(centers)):
        sel = ds[(idx == b) & (taus >= edges[0]) & (taus <= edges[-1])]
        if sel.size:
            means[b] = sel.mean()
            errs[b] = sel.std(ddof=1) / np.sqrt(sel.size) if sel.size > 1 else 0.0
    return ScalarSeries(centers, means, errs)


def total_entropy_changes(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per jump-to-jump pair: (dE of the jump, total dS jump+interval, tau before the jump)."""
    pairs = consecutive_event_pairs(records)
    de = np.array([a.de_qj for a, _ in pairs])
    ds = np.array([a.ds_qj + b.ds_nh for a, b in pairs])
    tau = np.array([a.tau for a, _ in pairs])
    return de, ds, tau


def energy_conditioned_entropy(records, de_cut, bins=None) -> tuple[Histogram, Histogram]:
    """P(dS_total) split by the jump energy change being above/below the cut."""
    de, ds, _ = total_entropy_changes(records)
    if de.size == 0:
        raise ValueError("need events with a following interval")
    large = ds[de > de_cut]
    small = ds[de <= de_cut]
    return Histogram.from_samples(large, bins=bins), Histogram.from_samples(small, bins=bins)


def waiting_time_vs_energy(records, n_bins=10) -> ScalarSeries:
    """Mean waiting time preceding a jump, binned by the jump's energy change."""
    evs = real_events(records)
    de = np.array([ev.de_qj for ev in evs])
    tau = np.array([ev.tau for ev in evs])
    if de.size == 0:
        raise ValueError("no events in the given records")
    edges = np.histogram_bin_edges(de, bins=int(n_bins))
    centers = 0.5 * (edges[:-1] + edges[1:])
    means = np.full(centers.shape, np.nan)
    errs = np.full(centers.shape, np.nan)
    idx = np.clip(np.digitize(de, edges) - 1, 0, len(centers) - 1)
    for b in range(len(centers)):
        sel = tau[idx == b]
        if sel.size:
            means[b] = sel.mean()
            errs[b] = sel.std(ddof=1) / np.sqrt(sel.size) if sel.size > 1 else 0.0
    return ScalarSeries(centers, means, errs)


def energy_entropy_correlation(records, n_bins=10) -> tuple[ScalarSeries, float]:
    """Binned mean dS_total vs dE_qj, plus their Pearson coefficient."""
    de, ds, _ = total_entropy_changes(records)
    if de.size < 10:
        raise ValueError(f"need at least 10 jump pairs, got {de.size}")
    if de.std() == 0 or ds.std() == 0:
        coeff = float("nan")
    else:
        coeff = float(np.corrcoef(de, ds)[0, 1])
    edges = np.histogram_bin_edges(de, bins=int(n_bins))
    centers = 0.5 * (edges[:-1] + edges[1:])
    means = np.full(centers.shape, np.nan)
    idx = np.clip(np.digitize(de, edges) - 1, 0, len(centers) - 1)
    for b in range(len(centers)):
        sel = ds[idx == b]
        if sel.size:
            means[b] = sel.mean()
    return ScalarSeries(centers, means), coeff


# ---------------------------------------------------------------------------
# time-series analysis

@dataclass(frozen=True)
class SaturationResult:
    tau_inf: float
    s_inf: float
    reached: bool


def saturation_time_series(times, values, epsilon, kernel_width) -> SaturationResult:
    """Earliest time after which the smoothed series stays within epsilon
    of its late-time (final 20%) average."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    spacing = times[1] - times[0]
    sigma = max(kernel_width / spacing, 1e-9)
    smooth = gaussian_filter1d(values, sigma=sigma, mode="nearest")
    tail_start = int(np.floor(len(smooth) * (1.0 - TAIL_FRACTION)))
    s_inf = float(smooth[tail_start:].mean())
    ok = np.abs(smooth - s_inf) <= epsilon
    # earliest index from which ok holds for every later sample
    holds_from = len(ok)
    for i in range(len(ok) - 1, -1, -1):
        if ok[i]:
            holds_from = i
        else:
            break
    if holds_from >= len(ok):
        return SaturationResult(float("nan"), s_inf, False)
    return SaturationResult(float(times[holds_from]), s_inf, True)


def saturation_time(summary: EnsembleSummary, ell, epsilon, kernel_width) -> SaturationResult:
    return saturation_time_series(
        summary.sample_times, summary.entropy_mean(ell), epsilon, kernel_width
    )


@dataclass(frozen=True)
class VelocityFit:
    velocity: float
    stderr: float
    window: tuple[float, float]
    n_points: int


def _ols_slope(t, y) -> tuple[float, float]:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tbar, ybar = t.mean(), y.mean()
    sxx = np.sum((t - tbar) ** 2)
    slope = np.sum((t - tbar) * (y - ybar)) / sxx
    resid = y - (ybar + slope * (t - tbar))
    dof = max(len(t) - 2, 1)
    se = float(np.sqrt(np.sum(resid**2) / dof / sxx))
    return float(slope), se


def growth_velocity(
    summary: EnsembleSummary, ell, fit_window=None, kernel_width=2.0
) -> VelocityFit:
    """Least-squares entropy growth rate over the fit window.

    Without an explicit window, the fit covers the stretch where the
    smoothed baseline-subtracted curve rises from 10% to 50% of its
    late-time value; if that auto-window is degenerate the whole series
    is used.  An explicit window shorter than 5 samples is an error.
    """
    times = summary.sample_times
    y = summary.entropy_mean(ell)
    if fit_window is None:
        spacing = times[1] - times[0]
        smooth = gaussian_filter1d(y, sigma=max(kernel_width / spacing, 1e-9),
                                   mode="nearest")
        rise = smooth - smooth[0]
        tail_start = int(np.floor(len(rise) * (1.0 - TAIL_FRACTION)))
        level = rise[tail_start:].mean()
        lo_hits = np.nonzero(rise >= 0.1 * level)[0]
        hi_hits = np.nonzero(rise >= 0.5 * level)[0]
        i_lo = int(lo_hits[0]) if lo_hits.size else 0
        i_hi = int(hi_hits[0]) if hi_hits.size else len(times) - 1
        if i_hi - i_lo + 1 < 5:
            i_lo, i_hi = 0, len(times) - 1
        window = (float(times[i_lo]), float(times[i_hi]))
    else:
        window = (float(fit_window[0]), float(fit_window[1]))
    sel = (times >= window[0] - 1e-12) & (times <= window[1] + 1e-12)
    if sel.sum() < 5:
        raise ValueError(f"fit window {window} covers {int(sel.sum())} < 5 samples")
    slope, se = _ols_slope(times[sel], y[sel])
    return VelocityFit(slope, se, window, int(sel.sum()))


def _linear_fit_r2(x, y) -> tuple[float, float, float, float]:
    slope, se = _ols_slope(x, y)
    ybar = y.mean()
    yhat = ybar + slope * (x - x.mean())
    ss_res = np.sum((y - yhat) ** 2)
    ss_tot = np.sum((y - ybar) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = len(x)
    adj = 1.0 - (1.0 - r2) * (n - 1) / max(n - 2, 1)
    return slope, se, r2, adj


@dataclass(frozen=True)
class ScalingFit:
    series: ScalarSeries
    slope: float
    slope_stderr: float
    intercept: float
    adj_r2_linear: float
    adj_r2_log: float
    preferred: str  # "linear" or "logarithmic"
    saturation_flags: tuple[bool, ...] | None


def steady_scaling(
    summary: EnsembleSummary | list[EnsembleSummary],
    tail_fraction: float = TAIL_FRACTION,
    epsilon: float | None = None,
    kernel_width: float | None = None,
) -> ScalingFit:
    """Late-time entropy versus subsystem size, with linear-vs-log comparison.

    Accepts one multi-size summary or a list of summaries; the value per
    size is the average over the final `tail_fraction` of samples.  Model
    comparison (adjusted R^2 of linear vs logarithmic fits) uses sizes
    >= 4 when enough of them exist.  If `epsilon` is given, a saturation
    flag per size is computed with `saturation_time`.
    """
    summaries = [summary] if isinstance(summary, EnsembleSummary) else list(summary)
    ells, vals, errs, flags = [], [], [], []
    for s in summaries:
        tail = int(np.floor(len(s.sample_times) * (1.0 - tail_fraction)))
        for ell in s.subsystem_sizes:
            series = s.entropy_mean(ell)
            ells.append(ell)
            vals.append(float(series[tail:].mean()))
            errs.append(float(np.mean(s.stderr(f"S_ell{ell}")[tail:])))
            if epsilon is not None:
                kw = kernel_width if kernel_width is not None else 5.0
                flags.append(saturation_time(s, ell, epsilon, kw).reached)
    order = np.argsort(ells)
    x = np.array(ells, dtype=float)[order]
    y = np.array(vals, dtype=float)[order]
    e = np.array(errs, dtype=float)[order]
    series = ScalarSeries(x, y, e)
    sel = x >= 4 if np.sum(x >= 4) >= 3 else np.ones_like(x, dtype=bool)
    slope, se, _, adj_lin = _linear_fit_r2(x[sel], y[sel])
    _, _, _, adj_log = _linear_fit_r2(np.log(x[sel]), y[sel])
    intercept = float(y[sel].mean() - slope * x[sel].mean())
    return ScalingFit(
        series=series,
        slope=slope,
        slope_stderr=se,
        intercept=intercept,
        adj_r2_linear=float(adj_lin),
        adj_r2_log=float(adj_log),
        preferred="linear" if adj_lin >= adj_log else "logarithmic",
        saturation_flags=tuple(flags) if epsilon is not None else None,
    )
