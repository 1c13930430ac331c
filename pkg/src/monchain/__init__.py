"""Quantum-jump trajectories of a free-fermion chain with local density monitoring."""

__version__ = "0.1.0"

from .config import SimConfig, config_from_flat, fingerprint, parse_config
from .gaussian import (
    GaussianState,
    correlation_block,
    correlation_matrix,
    energy,
    entanglement_entropy,
    fock_oracle_expand,
    occupation,
    occupations,
    reorthonormalize,
)
from .lattice import (
    LatticeSpec,
    SingleParticleOperator,
    build_hopping,
    build_monitored_hamiltonian,
    build_real_potential,
    fermi_sea,
)
from .trajectory import (
    JumpEvent,
    Propagator,
    TrajectoryRecord,
    apply_number_projection,
    evolve_interval,
    jump_probability,
    make_propagator,
    run_fixed_interval,
    run_hermitian_quench,
    run_no_click,
    run_projective,
    run_quantum_jump_trajectory,
    run_trajectory,
)

__all__ = [
    "GaussianState",
    "JumpEvent",
    "LatticeSpec",
    "Propagator",
    "SimConfig",
    "SingleParticleOperator",
    "TrajectoryRecord",
    "apply_number_projection",
    "build_hopping",
    "build_monitored_hamiltonian",
    "build_real_potential",
    "config_from_flat",
    "correlation_block",
    "correlation_matrix",
    "energy",
    "entanglement_entropy",
    "evolve_interval",
    "fermi_sea",
    "fingerprint",
    "fock_oracle_expand",
    "jump_probability",
    "make_propagator",
    "occupation",
    "occupations",
    "parse_config",
    "reorthonormalize",
    "run_fixed_interval",
    "run_hermitian_quench",
    "run_no_click",
    "run_projective",
    "run_quantum_jump_trajectory",
    "run_trajectory",
]
