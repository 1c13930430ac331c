"""Time evolution protocols for the monitored chain.

Five runners produce TrajectoryRecords from the same Fermi-sea start:

* quantum_jump     - Bernoulli-sampled density jumps at the monitored
                     sites, non-Hermitian drift in between,
* no_click         - the deterministic zero-jump trajectory,
* hermitian_quench - unitary evolution after switching on the real
                     scattering potential,
* fixed_interval   - forced occupation projections on a rigid schedule,
* projective       - Born-rule density measurements at Poisson times,
                     unitary evolution in between.

All stepped protocols use a fixed timestep dt with one propagator
application plus re-orthonormalization per step; jumps are scanned after
each step, so event times live on the step grid.  Records are exactly
reproducible from (config, rng stream).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .config import SimConfig
from .errors import ConfigError, ImpossibleOutcomeError, NumericalIntegrityError
from .gaussian import (
    GaussianState,
    energy,
    entanglement_entropy,
    occupation,
    orthonormalize_columns,
    quadratic_expectation,
)
from .lattice import (
    HOPPING,
    NON_HERMITIAN_MONITORED,
    SingleParticleOperator,
    build_hopping,
    build_monitored_hamiltonian,
    build_real_potential,
    fermi_sea,
)

_OCCUPIED_MIN = 1e-10


# ---------------------------------------------------------------------------
# propagators

@dataclass(frozen=True)
class Propagator:
    """Cached single-particle step matrix M = exp(-i * h * dt)."""

    matrix: np.ndarray = field(repr=False)
    source_kind: str
    dt: float


_PROPAGATOR_CACHE: dict[tuple, Propagator] = {}
_PROPAGATOR_CACHE_MAX = 64


def make_propagator(op: SingleParticleOperator, dt: float) -> Propagator:
    """Exact step propagator for the given generator.

    Hermitian kinds go through the spectral decomposition, the monitored
    non-Hermitian kind through scaling-and-squaring.  Results are cached
    per (operator content, dt).
    """
    if dt <= 0:
        raise ConfigError(f"propagator dt must be > 0, got {dt}")
    key = (op.kind, float(dt), hashlib.sha1(op.matrix.tobytes()).hexdigest())
    hit = _PROPAGATOR_CACHE.get(key)
    if hit is not None:
        return hit
    if op.kind == NON_HERMITIAN_MONITORED:
        m = scipy.linalg.expm(-1j * dt * op.matrix)
        smax = float(np.linalg.norm(m, 2))
        if smax > 1.0 + 1e-10:
            raise NumericalIntegrityError(
                f"monitored propagator is not contractive (max sv {smax})"
            )
    else:
        evals, evecs = np.linalg.eigh(op.matrix)
        m = (evecs * np.exp(-1j * dt * evals)) @ evecs.conj().T
        defect = np.abs(m.conj().T @ m - np.eye(op.dim)).max()
        if defect > 1e-10:
            raise NumericalIntegrityError(
                f"hermitian propagator not unitary (defect {defect:.3e})"
            )
    if not np.all(np.isfinite(m)):
        raise NumericalIntegrityError("propagator has non-finite entries")
    m.setflags(write=False)
    prop = Propagator(matrix=m, source_kind=op.kind, dt=float(dt))
    if len(_PROPAGATOR_CACHE) >= _PROPAGATOR_CACHE_MAX:
        _PROPAGATOR_CACHE.clear()
    _PROPAGATOR_CACHE[key] = prop
    return prop


def evolve_interval(state: GaussianState, prop: Propagator, steps: int) -> GaussianState:
    """Apply the step propagator `steps` times, re-orthonormalizing each step."""
    if prop.matrix.shape[0] != state.L:
        raise ValueError("propagator dimension does not match the state")
    u = state.U
    for _ in range(steps):
        u = orthonormalize_columns(prop.matrix @ u)
    return GaussianState(u)


def jump_probability(state: GaussianState, site: int, gamma: float, dt: float) -> float:
    """First-order jump probability gamma * dt * <n_site> for one step."""
    if gamma * dt > 0.1 + 1e-12:
        raise ConfigError(f"gamma*dt = {gamma * dt:.4g} exceeds the 0.1 step guard")
    return gamma * dt * occupation(state, site)


def apply_number_projection(state: GaussianState, site: int, outcome: int) -> GaussianState:
    """Project the density at `site` onto the given outcome and renormalize.

    Outcome 1 keeps the occupied component: the site amplitude is
    concentrated into a pivot column which is then replaced by the site
    basis vector.  Outcome 0 keeps the empty component by zeroing the
    site row.  Both end with re-orthonormalization.
    """
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    occ = occupation(state, site)
    if outcome == 1:
        if occ < _OCCUPIED_MIN:
            raise ImpossibleOutcomeError(
                f"occupied outcome at site {site} has probability {occ:.3e}"
            )
        u = state.U.copy()
        row = u[site, :]
        pivot = int(np.argmax(np.abs(row)))
        u = u - np.outer(u[:, pivot], row / row[pivot])
        u[:, pivot] = 0.0
        u[site, pivot] = 1.0
    else:
        if 1.0 - occ < _OCCUPIED_MIN:
            raise ImpossibleOutcomeError(
                f"empty outcome at site {site} has probability {1.0 - occ:.3e}"
            )
        u = state.U.copy()
        u[site, :] = 0.0
    return GaussianState(orthonormalize_columns(u))


# ---------------------------------------------------------------------------
# records

@dataclass(frozen=True)
class JumpEvent:
    """One measurement event along a trajectory.

    `tau` is the time elapsed since the previous (non-skipped) event, or
    since t=0 for the first one; `ds_qj`/`de_qj` are the entropy/energy
    changes across the instantaneous projection; `ds_nh` is the entropy
    accumulated during the deterministic stretch that preceded the event.
    Skipped events mark fixed-interval projections that found an empty
    site; they change nothing and do not reset the waiting clock.
    """

    time: float
    site: int
    tau: float
    ds_qj: float
    ds_nh: float
    de_qj: float
    outcome: int = 1
    skipped: bool = False


@dataclass
class TrajectoryRecord:
    """Sampled observables plus the event log of one trajectory."""

    fingerprint: str
    protocol: str
    seed_key: int
    sample_times: np.ndarray
    subsystem_sizes: tuple[int, ...]
    entropies: np.ndarray  # shape (len(subsystem_sizes), n_samples)
    energy: np.ndarray
    occupation_j0: np.ndarray
    events: list[JumpEvent]
    end_time: float

    def entropy_series(self, ell: int) -> np.ndarray:
        return self.entropies[self.subsystem_sizes.index(ell)]

    def validate(self):
        n = len(self.sample_times)
        if self.entropies.shape != (len(self.subsystem_sizes), n):
            raise ValueError("entropy series shape mismatch")
        if self.energy.shape != (n,) or self.occupation_j0.shape != (n,):
            raise ValueError("series length mismatch")
        if n > 1:
            gaps = np.diff(self.sample_times)
            if np.abs(gaps - gaps[0]).max() > 1e-9:
                raise ValueError("sample grid is not uniform")
        prev_t, clock = 0.0, 0.0
        for ev in self.events:
            if ev.time < prev_t - 1e-12 or ev.time > self.end_time + 1e-9:
                raise ValueError(f"event time {ev.time} out of order or range")
            if abs(ev.tau - (ev.time - clock)) > 1e-9:
                raise ValueError(f"event at t={ev.time} has inconsistent tau")
            prev_t = ev.time
            if not ev.skipped:
                clock = ev.time
        return self


class _SeriesBuffer:
    def __init__(self, config: SimConfig):
        self.sizes = config.subsystem_sizes
        self.offset = config.subsystem_offset
        self.j0 = config.lattice.monitored_sites[0]
        n = config.n_samples
        self.times = np.arange(n) * config.sample_interval
        self.entropies = np.zeros((len(self.sizes), n))
        self.energy = np.zeros(n)
        self.occ = np.zeros(n)
        self._idx = 0

    def record(self, state: GaussianState, h0: SingleParticleOperator):
        i = self._idx
        for a, ell in enumerate(self.sizes):
            self.entropies[a, i] = entanglement_entropy(state, ell, self.offset)
        self.energy[i] = energy(state, h0)
        self.occ[i] = occupation(state, self.j0)
        self._idx += 1


class _EventTracker:
    """Waiting-clock and entropy bookkeeping between events."""

    def __init__(self, entropy_at_start: float):
        self.clock = 0.0
        self.s_after_last = entropy_at_start
        self.events: list[JumpEvent] = []

    def log(self, t, site, s_before, s_after, e_before, e_after, outcome=1):
        self.events.append(
            JumpEvent(
                time=t,
                site=site,
                tau=t - self.clock,
                ds_qj=s_after - s_before,
                ds_nh=s_before - self.s_after_last,
                de_qj=e_after - e_before,
                outcome=outcome,
            )
        )
        self.clock = t
        self.s_after_last = s_after

    def log_skipped(self, t, site, s_now):
        self.events.append(
            JumpEvent(
                time=t,
                site=site,
                tau=t - self.clock,
                ds_qj=0.0,
                ds_nh=s_now - self.s_after_last,
                de_qj=0.0,
                outcome=1,
                skipped=True,
            )
        )


def _finish(config, fingerprint_str, seed_key, buf, events) -> TrajectoryRecord:
    return TrajectoryRecord(
        fingerprint=fingerprint_str,
        protocol=config.protocol,
        seed_key=seed_key,
        sample_times=buf.times,
        subsystem_sizes=tuple(buf.sizes),
        entropies=buf.entropies,
        energy=buf.energy,
        occupation_j0=buf.occ,
        events=events,
        end_time=config.n_steps * config.dt,
    )


# ---------------------------------------------------------------------------
# runners

def run_quantum_jump_trajectory(
    config: SimConfig, rng: np.random.Generator, seed_key: int = 0
) -> TrajectoryRecord:
    """One stochastic quantum-jump trajectory.

    Each step applies the non-Hermitian propagator, then scans the
    monitored sites in ascending order, firing an occupied-outcome
    projection at site i with probability gamma*dt*<n_i>.  The draw
    schedule is fixed (one uniform per site per step), so the record is
    a deterministic function of the rng stream.
    """
    if config.protocol != "quantum_jump":
        raise ConfigError(f"protocol is {config.protocol!r}, expected quantum_jump")
    from .config import fingerprint as _fp

    spec = config.lattice
    h0 = build_hopping(spec)
    prop = make_propagator(build_monitored_hamiltonian(h0, spec), config.dt)
    state = fermi_sea(spec)
    sites = spec.monitored_sites
    gamma_dt = spec.gamma * config.dt
    ev_ell, offset = config.event_ell, config.subsystem_offset

    buf = _SeriesBuffer(config)
    buf.record(state, h0)
    tracker = _EventTracker(entanglement_entropy(state, ev_ell, offset))
    m = prop.matrix
    sps = config.steps_per_sample
    for step in range(1, config.n_steps + 1):
        state.U = orthonormalize_columns(m @ state.U)
        draws = rng.random(len(sites))
        t = step * config.dt
        for i, site in enumerate(sites):
            if draws[i] < gamma_dt * occupation(state, site):
                s_before = entanglement_entropy(state, ev_ell, offset)
                e_before = energy(state, h0)
                state = apply_number_projection(state, site, 1)
                s_after = entanglement_entropy(state, ev_ell, offset)
                e_after = energy(state, h0)
                tracker.log(t, site, s_before, s_after, e_before, e_after)
        if step % sps == 0:
            buf.record(state, h0)
    return _finish(config, _fp(config), seed_key, buf, tracker.events)


def _run_deterministic(config: SimConfig, generator: SingleParticleOperator) -> TrajectoryRecord:
    from .config import fingerprint as _fp

    h0 = build_hopping(config.lattice)
    prop = make_propagator(generator, config.dt)
    state = fermi_sea(config.lattice)
    buf = _SeriesBuffer(config)
    buf.record(state, h0)
    m = prop.matrix
    sps = config.steps_per_sample
    for step in range(1, config.n_steps + 1):
        state.U = orthonormalize_columns(m @ state.U)
        if step % sps == 0:
            buf.record(state, h0)
    return _finish(config, _fp(config), -1, buf, [])


def run_no_click(config: SimConfig) -> TrajectoryRecord:
    """The deterministic zero-jump trajectory under the non-Hermitian drift."""
    if config.protocol != "no_click":
        raise ConfigError(f"protocol is {config.protocol!r}, expected no_click")
    h0 = build_hopping(config.lattice)
    return _run_deterministic(config, build_monitored_hamiltonian(h0, config.lattice))


def run_hermitian_quench(config: SimConfig) -> TrajectoryRecord:
    """Unitary evolution after quenching on the real scattering potential."""
    if config.protocol != "hermitian_quench":
        raise ConfigError(
            f"protocol is {config.protocol!r}, expected hermitian_quench"
        )
    spec = config.lattice
    h0 = build_hopping(spec)
    quench = build_real_potential(h0, spec.monitored_sites[0], spec.gamma)
    return _run_deterministic(config, quench)


def run_fixed_interval(config: SimConfig, delta_t: float | None = None) -> TrajectoryRecord:
    """Occupied-outcome projections forced at t = dT, 2*dT, ... at the first
    monitored site, irrespective of the jump probability.

    Scheduled times are snapped to the step grid.  A projection that
    finds the site numerically empty is skipped and logged with the
    `skipped` flag.
    """
    if config.protocol != "fixed_interval":
        raise ConfigError(f"protocol is {config.protocol!r}, expected fixed_interval")
    from .config import fingerprint as _fp

    d_t = config.delta_t if delta_t is None else delta_t
    if d_t is None or d_t <= 0:
        raise ConfigError("fixed_interval protocol needs delta_t > 0")
    spec = config.lattice
    h0 = build_hopping(spec)
    prop = make_propagator(build_monitored_hamiltonian(h0, spec), config.dt)
    state = fermi_sea(spec)
    j0 = spec.monitored_sites[0]
    ev_ell, offset = config.event_ell, config.subsystem_offset

    buf = _SeriesBuffer(config)
    buf.record(state, h0)
    tracker = _EventTracker(entanglement_entropy(state, ev_ell, offset))
    m = prop.matrix
    sps = config.steps_per_sample
    k = 1
    next_step = int(np.ceil(k * d_t / config.dt - 1e-9))
    for step in range(1, config.n_steps + 1):
        state.U = orthonormalize_columns(m @ state.U)
        t = step * config.dt
        while next_step == step:
            if occupation(state, j0) < _OCCUPIED_MIN:
                tracker.log_skipped(t, j0, entanglement_entropy(state, ev_ell, offset))
            else:
                s_before = entanglement_entropy(state, ev_ell, offset)
                e_before = energy(state, h0)
                state = apply_number_projection(state, j0, 1)
                s_after = entanglement_entropy(state, ev_ell, offset)
                e_after = energy(state, h0)
                tracker.log(t, j0, s_before, s_after, e_before, e_after)
            k += 1
            next_step = int(np.ceil(k * d_t / config.dt - 1e-9))
        if step % sps == 0:
            buf.record(state, h0)
    return _finish(config, _fp(config), -1, buf, tracker.events)


def run_projective(
    config: SimConfig, rng: np.random.Generator, seed_key: int = 0
) -> TrajectoryRecord:
    """Projective density measurements at Poisson(gamma) times.

    Between measurements the state evolves unitarily under the bare
    hopping Hamiltonian; the evolution is advanced exactly (spectral
    propagator for the exact interval), so dt plays no role here beyond
    fixing the nominal end time.  Each measurement draws outcome 1 with
    Born probability <n_j0>.
    """
    if config.protocol != "projective":
        raise ConfigError(f"protocol is {config.protocol!r}, expected projective")
    from .config import fingerprint as _fp

    spec = config.lattice
    h0 = build_hopping(spec)
    evals, evecs = np.linalg.eigh(h0.matrix)
    state = fermi_sea(spec)
    j0 = spec.monitored_sites[0]
    gamma = spec.gamma
    ev_ell, offset = config.event_ell, config.subsystem_offset

    buf = _SeriesBuffer(config)
    buf.record(state, h0)
    tracker = _EventTracker(entanglement_entropy(state, ev_ell, offset))

    def advance(u, delta):
        if delta <= 0:
            return u
        m = (evecs * np.exp(-1j * delta * evals)) @ evecs.conj().T
        return orthonormalize_columns(m @ u)

    end = config.n_steps * config.dt
    t = 0.0
    next_idx = 1
    next_meas = rng.exponential(1.0 / gamma) if gamma > 0 else np.inf
    while True:
        t_sample = (
            next_idx * config.sample_interval if next_idx < config.n_samples else np.inf
        )
        if next_meas < t_sample and next_meas <= end:
            state.U = advance(state.U, next_meas - t)
            t = next_meas
            p = occupation(state, j0)
            outcome = 1 if rng.random() < p else 0
            s_before = entanglement_entropy(state, ev_ell, offset)
            e_before = energy(state, h0)
            state = apply_number_projection(state, j0, outcome)
            s_after = entanglement_entropy(state, ev_ell, offset)
            e_after = energy(state, h0)
            tracker.log(t, j0, s_before, s_after, e_before, e_after, outcome=outcome)
            next_meas = t + rng.exponential(1.0 / gamma)
        elif next_idx < config.n_samples:
            state.U = advance(state.U, t_sample - t)
            t = t_sample
            buf.record(state, h0)
            next_idx += 1
        else:
            break
    return _finish(config, _fp(config), seed_key, buf, tracker.events)


def run_trajectory(
    config: SimConfig, rng: np.random.Generator | None = None, seed_key: int = 0
) -> TrajectoryRecord:
    """Dispatch to the runner selected by config.protocol."""
    if config.protocol == "quantum_jump":
        return run_quantum_jump_trajectory(config, rng, seed_key)
    if config.protocol == "no_click":
        return run_no_click(config)
    if config.protocol == "hermitian_quench":
        return run_hermitian_quench(config)
    if config.protocol == "fixed_interval":
        return run_fixed_interval(config)
    if config.protocol == "projective":
        return run_projective(config, rng, seed_key)
    raise ConfigError(f"unknown protocol {config.protocol!r}")


# ---------------------------------------------------------------------------
# serialization (CSV time series, JSONL event log)

def series_header(sizes) -> list[str]:
    return ["t"] + [f"S_ell{ell}" for ell in sizes] + ["E", "n_j0"]


def write_series_csv(record: TrajectoryRecord, path: str | Path):
    lines = [",".join(series_header(record.subsystem_sizes))]
    for i, t in enumerate(record.sample_times):
        vals = [t] + [record.entropies[a, i] for a in range(len(record.subsystem_sizes))]
        vals += [record.energy[i], record.occupation_j0[i]]
        lines.append(",".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def write_events_jsonl(record: TrajectoryRecord, path: str | Path):
    lines = []
    for ev in record.events:
        lines.append(
            json.dumps(
                {
                    "t": ev.time,
                    "site": ev.site,
                    "tau": ev.tau,
                    "dS_qj": ev.ds_qj,
                    "dS_nH": ev.ds_nh,
                    "dE_qj": ev.de_qj,
                    "outcome": ev.outcome,
                    "skipped": ev.skipped,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_series_csv(path: str | Path):
    """Parse a series CSV back into (times, sizes, entropies, energy, occ)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    sizes = tuple(int(h[len("S_ell"):]) for h in header if h.startswith("S_ell"))
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    times = data[:, 0]
    entropies = data[:, 1 : 1 + len(sizes)].T
    e_col = 1 + len(sizes)
    return times, sizes, entropies, data[:, e_col], data[:, e_col + 1]


def read_events_jsonl(path: str | Path) -> list[JumpEvent]:
    events = []
    text = Path(path).read_text()
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        events.append(
            JumpEvent(
                time=d["t"],
                site=d["site"],
                tau=d["tau"],
                ds_qj=d["dS_qj"],
                ds_nh=d["dS_nH"],
                de_qj=d["dE_qj"],
                outcome=d["outcome"],
                skipped=d.get("skipped", False),
            )
        )
    return events


def record_from_files(
    csv_path: str | Path,
    events_path: str | Path,
    fingerprint: str,
    protocol: str,
    seed_key: int,
    end_time: float,
) -> TrajectoryRecord:
    times, sizes, entropies, energy_series, occ = read_series_csv(csv_path)
    events = read_events_jsonl(events_path) if Path(events_path).exists() else []
    return TrajectoryRecord(
        fingerprint=fingerprint,
        protocol=protocol,
        seed_key=seed_key,
        sample_times=times,
        subsystem_sizes=sizes,
        entropies=entropies,
        energy=energy_series,
        occupation_j0=occ,
        events=events,
        end_time=end_time,
    ).validate()
