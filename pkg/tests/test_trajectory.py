import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from monchain import fockspace
from monchain.config import config_from_flat
from monchain.errors import ConfigError, ImpossibleOutcomeError
from monchain.gaussian import (
    GaussianState,
    correlation_matrix,
    entanglement_entropy,
    energy,
    occupation,
    occupations,
)
from monchain.lattice import (
    LatticeSpec,
    build_hopping,
    build_monitored_hamiltonian,
    fermi_sea,
)
from monchain.trajectory import (
    apply_number_projection,
    evolve_interval,
    jump_probability,
    make_propagator,
    read_events_jsonl,
    read_series_csv,
    record_from_files,
    run_fixed_interval,
    run_hermitian_quench,
    run_no_click,
    run_projective,
    run_quantum_jump_trajectory,
    write_events_jsonl,
    write_series_csv,
)


def qj_config(**over):
    base = {
        "L": 6, "J": 0.5, "nu": 0.5, "gamma": 0.5, "protocol": "quantum_jump",
        "dt": 0.05, "t_max": 10.0, "sample_interval": 0.5,
        "subsystem_sizes": [2, 3],
    }
    base.update(over)
    return config_from_flat(base)


# ---------------------------------------------------------------------------
# propagators

def test_propagator_of_zero_generator_is_identity():
    spec = LatticeSpec(L=4, J=0.0, gamma=0.0)
    prop = make_propagator(build_hopping(spec), 0.3)
    assert np.allclose(prop.matrix, np.eye(4), atol=1e-14)


def test_hermitian_propagator_is_unitary():
    h0 = build_hopping(LatticeSpec(L=8, J=0.5))
    m = make_propagator(h0, 0.05).matrix
    assert np.abs(m.conj().T @ m - np.eye(8)).max() < 1e-10


def test_monitored_propagator_is_contractive():
    spec = LatticeSpec(L=8, J=0.5, gamma=1.5, monitored_sites=(0, 3))
    hnh = build_monitored_hamiltonian(build_hopping(spec), spec)
    m = make_propagator(hnh, 0.05).matrix
    assert np.linalg.norm(m, 2) <= 1 + 1e-10


def test_monitored_propagator_matches_taylor_series():
    # oracle: 4th-order Taylor expansion, remainder O(dt^5)
    spec = LatticeSpec(L=2, J=0.5, nu=0.5, pbc=False, gamma=0.5)
    hnh = build_monitored_hamiltonian(build_hopping(spec), spec)

    def taylor_gap(dt):
        a = -1j * dt * hnh.matrix
        series = sum(np.linalg.matrix_power(a, n) / np.math.factorial(n)
                     for n in range(5))
        return np.abs(make_propagator(hnh, dt).matrix - series).max()

    norm = np.linalg.norm(hnh.matrix, 2)
    gap1 = taylor_gap(1e-2)
    assert gap1 < (norm * 1e-2) ** 5  # comfortably inside the dt^5 envelope
    gap2 = taylor_gap(2e-2)
    assert 20 < gap2 / gap1 < 45  # fifth-order scaling, expect ~32


def test_propagator_cache_returns_same_object():
    h0 = build_hopping(LatticeSpec(L=6, J=0.5))
    assert make_propagator(h0, 0.05) is make_propagator(h0, 0.05)
    assert make_propagator(h0, 0.05) is not make_propagator(h0, 0.025)


def test_evolve_interval_keeps_fermi_sea_observables():
    spec = LatticeSpec(L=6, J=0.5, nu=0.5)
    sea = fermi_sea(spec)
    h0 = build_hopping(spec)
    out = evolve_interval(sea, make_propagator(h0, 0.05), 200)
    assert abs(energy(out, h0) - energy(sea, h0)) < 1e-9
    assert np.abs(occupations(out) - occupations(sea)).max() < 1e-9


def test_zero_rate_monitored_propagator_equals_hopping():
    spec = LatticeSpec(L=6, J=0.5, nu=0.5, gamma=0.0)
    h0 = build_hopping(spec)
    hnh = build_monitored_hamiltonian(h0, spec)
    state = random_state(6, 3, 3)
    a = evolve_interval(state, make_propagator(h0, 0.05), 37)
    b = evolve_interval(state, make_propagator(hnh, 0.05), 37)
    assert np.abs(correlation_matrix(a) - correlation_matrix(b)).max() < 1e-12


def test_nonhermitian_interval_matches_fock_oracle():
    spec = LatticeSpec(L=4, J=0.5, nu=0.5, gamma=0.8)
    hnh = build_monitored_hamiltonian(build_hopping(spec), spec)
    state = fermi_sea(spec)
    steps, dt = 20, 0.05  # t = 1
    evolved = evolve_interval(state, make_propagator(hnh, dt), steps)

    psi = fockspace.slater_amplitudes(state.U)
    m_many = fockspace.step_propagator(hnh.matrix, dt)
    for _ in range(steps):
        psi = m_many @ psi
        psi /= np.linalg.norm(psi)
    c_exact = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            h = np.zeros((4, 4))
            h[j, i] = 1.0
            c_exact[i, j] = np.vdot(psi, fockspace.quadratic_many_body(h) @ psi)
    assert np.abs(correlation_matrix(evolved) - c_exact).max() < 1e-7


# ---------------------------------------------------------------------------
# jumps

def test_jump_probability_values():
    sea = fermi_sea(LatticeSpec(L=4, nu=0.25))
    assert abs(jump_probability(sea, 1, 0.5, 0.05) - 0.00625) < 1e-15
    dark = GaussianState(np.array([[1.0], [0.0]]))
    assert jump_probability(dark, 1, 0.5, 0.05) == 0.0
    full = apply_number_projection(sea, 2, 1)
    assert abs(jump_probability(full, 2, 0.5, 0.05) - 0.025) < 1e-12
    with pytest.raises(ConfigError):
        jump_probability(sea, 0, 4.0, 0.05)


def test_projection_is_idempotent_on_occupied_site():
    state = random_state(5, 2, 11)
    once = apply_number_projection(state, 3, 1)
    twice = apply_number_projection(once, 3, 1)
    assert np.abs(correlation_matrix(twice) - correlation_matrix(once)).max() < 1e-10


def test_projection_of_bonding_orbital():
    bonding = GaussianState(np.array([[1.0], [1.0]]) / np.sqrt(2))
    kept = apply_number_projection(bonding, 0, 1)
    assert np.abs(np.abs(kept.U[:, 0]) - [1.0, 0.0]).max() < 1e-12
    assert entanglement_entropy(kept, 1) < 1e-9


@given(seed=st.integers(0, 10**6), outcome=st.integers(0, 1),
       site=st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_projection_matches_fock_oracle(seed, outcome, site):
    state = random_state(4, 2, seed)
    occ = occupation(state, site)
    weight = occ if outcome == 1 else 1 - occ
    if weight < 1e-6:
        return
    projected = apply_number_projection(state, site, outcome)
    psi = fockspace.project_number(
        fockspace.slater_amplitudes(state.U), 4, site, outcome
    )
    c_exact = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            h = np.zeros((4, 4))
            h[j, i] = 1.0
            c_exact[i, j] = np.vdot(psi, fockspace.quadratic_many_body(h) @ psi)
    assert np.abs(correlation_matrix(projected) - c_exact).max() < 1e-8
    target = 1.0 if outcome == 1 else 0.0
    assert abs(occupation(projected, site) - target) < 1e-10


def test_projection_impossible_outcomes_raise():
    dark = GaussianState(np.array([[1.0], [0.0]]))
    with pytest.raises(ImpossibleOutcomeError):
        apply_number_projection(dark, 1, 1)
    with pytest.raises(ImpossibleOutcomeError):
        apply_number_projection(dark, 0, 0)


# ---------------------------------------------------------------------------
# runners

def test_quantum_jump_zero_rate_is_stationary():
    cfg = qj_config(gamma=0.0, t_max=20.0)
    rec = run_quantum_jump_trajectory(cfg, np.random.default_rng(0))
    assert not rec.events
    assert np.abs(rec.entropies - rec.entropies[:, :1]).max() < 1e-9
    assert np.abs(rec.energy - rec.energy[0]).max() < 1e-9
    rec.validate()


def test_quantum_jump_matches_fock_replay():
    # frozen outcomes: replay the logged events in the exact 2^L space
    cfg = qj_config(t_max=10.0)
    rec = run_quantum_jump_trajectory(cfg, np.random.default_rng(42))
    assert rec.events, "want at least one jump for a meaningful replay"

    spec = cfg.lattice
    hnh = build_monitored_hamiltonian(build_hopping(spec), spec)
    h_many = fockspace.quadratic_many_body(build_hopping(spec).matrix)
    m_many = fockspace.step_propagator(hnh.matrix, cfg.dt)
    psi = fockspace.slater_amplitudes(fermi_sea(spec).U)
    by_step = {}
    for ev in rec.events:
        by_step.setdefault(int(round(ev.time / cfg.dt)), []).append(ev)
    worst = 0.0
    sample_idx = 1
    for step in range(1, cfg.n_steps + 1):
        psi = m_many @ psi
        psi /= np.linalg.norm(psi)
        for ev in by_step.get(step, ()):
            s_pre = fockspace.entanglement_entropy(psi, spec.L, cfg.event_ell)
            e_pre = fockspace.expectation(psi, h_many)
            psi = fockspace.project_number(psi, spec.L, ev.site, 1)
            s_post = fockspace.entanglement_entropy(psi, spec.L, cfg.event_ell)
            e_post = fockspace.expectation(psi, h_many)
            worst = max(worst, abs(ev.ds_qj - (s_post - s_pre)),
                        abs(ev.de_qj - (e_post - e_pre)))
        if step % cfg.steps_per_sample == 0:
            for a, ell in enumerate(cfg.subsystem_sizes):
                worst = max(worst, abs(
                    rec.entropies[a, sample_idx]
                    - fockspace.entanglement_entropy(psi, spec.L, ell)
                ))
            worst = max(worst, abs(
                rec.energy[sample_idx] - fockspace.expectation(psi, h_many)
            ))
            sample_idx += 1
    assert worst < 1e-7


def test_quantum_jump_is_deterministic_per_seed():
    cfg = qj_config()
    a = run_quantum_jump_trajectory(cfg, np.random.default_rng(5))
    b = run_quantum_jump_trajectory(cfg, np.random.default_rng(5))
    c = run_quantum_jump_trajectory(cfg, np.random.default_rng(6))
    assert np.array_equal(a.entropies, b.entropies)
    assert a.events == b.events
    assert not np.array_equal(a.entropies, c.entropies)


def test_event_bookkeeping_consistency():
    cfg = qj_config(t_max=30.0, gamma=0.8)
    rec = run_quantum_jump_trajectory(cfg, np.random.default_rng(17))
    rec.validate()
    evs = [e for e in rec.events if not e.skipped]
    assert len(evs) >= 2
    assert abs(sum(e.tau for e in evs) - evs[-1].time) < 1e-9
    # occupied projections leave the monitored site full; entropy drops are logged
    assert all(e.outcome == 1 for e in evs)
    # waiting clock plus residual interval covers the whole run
    residual = rec.end_time - evs[-1].time
    assert residual >= 0


def test_no_click_zero_rate_is_flat():
    cfg = qj_config(protocol="no_click", gamma=0.0)
    rec = run_no_click(cfg)
    assert not rec.events
    assert np.abs(rec.entropies - rec.entropies[:, :1]).max() < 1e-9


def test_no_click_drains_monitored_site():
    cfg = qj_config(protocol="no_click", gamma=1.0, t_max=40.0)
    rec = run_no_click(cfg)
    assert rec.occupation_j0[-1] < rec.occupation_j0[0] * 0.2


def test_hermitian_quench_conserves_quench_energy():
    cfg = qj_config(protocol="hermitian_quench", gamma=0.3, t_max=50.0, L=12)
    rec = run_hermitian_quench(cfg)
    assert not rec.events
    # <H0 + V> reconstructed from the recorded series
    total = rec.energy + 0.5 * cfg.lattice.gamma * rec.occupation_j0
    assert np.abs(total - total[0]).max() < 1e-9
    cfg0 = qj_config(protocol="hermitian_quench", gamma=0.0)
    rec0 = run_hermitian_quench(cfg0)
    assert np.abs(rec0.entropies - rec0.entropies[:, :1]).max() < 1e-9


def test_fixed_interval_schedule():
    cfg = qj_config(protocol="fixed_interval", delta_t=2.0, t_max=10.0)
    rec = run_fixed_interval(cfg)
    times = [e.time for e in rec.events]
    assert np.allclose(times, [2.0, 4.0, 6.0, 8.0, 10.0], atol=1e-9)
    assert all(not e.skipped for e in rec.events)
    rec.validate()


def test_fixed_interval_beyond_horizon_is_no_click():
    cfg = qj_config(protocol="fixed_interval", delta_t=100.0, t_max=10.0)
    rec = run_fixed_interval(cfg)
    assert not rec.events
    ref = run_no_click(qj_config(protocol="no_click", t_max=10.0))
    assert np.abs(rec.entropies - ref.entropies).max() < 1e-12


def test_fixed_interval_skips_empty_site():
    # J=0 with strong monitoring drains site 0 completely before the jump
    cfg = config_from_flat({
        "L": 2, "J": 0.0, "nu": 0.5, "gamma": 1.0, "pbc": True,
        "protocol": "fixed_interval", "delta_t": 60.0, "dt": 0.05,
        "t_max": 60.0, "sample_interval": 1.0, "subsystem_sizes": [1],
    })
    rec = run_fixed_interval(cfg)
    assert len(rec.events) == 1
    assert rec.events[0].skipped
    rec.validate()


def test_projective_zero_rate_is_stationary():
    cfg = qj_config(protocol="projective", gamma=0.0, t_max=20.0)
    rec = run_projective(cfg, np.random.default_rng(0))
    assert not rec.events
    assert np.abs(rec.entropies - rec.entropies[:, :1]).max() < 1e-9


def test_projective_born_frequencies():
    # outcome-1 frequency of the first measurement reproduces the filling
    cfg = config_from_flat({
        "L": 8, "J": 0.5, "nu": 0.25, "gamma": 0.5, "protocol": "projective",
        "dt": 0.05, "t_max": 1.0, "sample_interval": 0.5, "subsystem_sizes": [2],
    })
    rng = np.random.default_rng(2024)
    first = []
    for _ in range(400):
        rec = run_projective(cfg, rng)
        if rec.events:
            first.append(rec.events[0].outcome)
    first = np.array(first)
    # early measurements hit a near-stationary sea: 3 sigma around nu
    assert first.size > 100
    se = np.sqrt(0.25 * 0.75 / first.size)
    assert abs(first.mean() - 0.25) < 3 * se + 0.02


def test_projective_events_follow_exponential_schedule():
    cfg = qj_config(protocol="projective", gamma=1.0, t_max=50.0)
    rec = run_projective(cfg, np.random.default_rng(9))
    taus = np.array([e.tau for e in rec.events])
    assert taus.size > 20
    assert abs(taus.mean() - 1.0) < 5 * taus.std() / np.sqrt(taus.size)
    rec.validate()


# ---------------------------------------------------------------------------
# serialization

def test_record_round_trip(tmp_path):
    cfg = qj_config(t_max=8.0, gamma=0.8)
    rec = run_quantum_jump_trajectory(cfg, np.random.default_rng(3), seed_key=7)
    csv_path = tmp_path / "t.csv"
    ev_path = tmp_path / "t.events.jsonl"
    write_series_csv(rec, csv_path)
    write_events_jsonl(rec, ev_path)

    times, sizes, entropies, energies, occ = read_series_csv(csv_path)
    assert sizes == rec.subsystem_sizes
    assert np.array_equal(times, rec.sample_times)
    assert np.array_equal(entropies, rec.entropies)
    assert np.array_equal(energies, rec.energy)
    assert np.array_equal(occ, rec.occupation_j0)
    assert read_events_jsonl(ev_path) == rec.events

    back = record_from_files(csv_path, ev_path, rec.fingerprint, rec.protocol,
                             7, rec.end_time)
    assert back.events == rec.events
    assert np.array_equal(back.entropies, rec.entropies)


def test_series_csv_header_layout(tmp_path):
    cfg = qj_config(t_max=1.0)
    rec = run_no_click(qj_config(protocol="no_click", t_max=1.0))
    path = tmp_path / "s.csv"
    write_series_csv(rec, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,S_ell2,S_ell3,E,n_j0"
