"""Single-particle operators of the monitored tight-binding chain.

Everything in this module lives in the L-dimensional single-particle space:
the hopping Hamiltonian, its non-Hermitian variant with an imaginary
potential -i*gamma/2 on the monitored sites, the Hermitian scattering
potential used for quench comparisons, and the Fermi-sea initial state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OpenShellWarning
from .gaussian import GaussianState

HOPPING = "hopping"
NON_HERMITIAN_MONITORED = "non_hermitian_monitored"
REAL_POTENTIAL = "real_potential"

# degeneracy detector for the Fermi-level shell, in units of the bandwidth
_DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class LatticeSpec:
    """Chain geometry, hopping strength, filling and monitoring layout.

    Parameters
    ----------
    L : int
        Number of sites (>= 2).
    J : float
        Hopping amplitude.
    pbc : bool
        Periodic boundary conditions.
    nu : float
        Filling fraction in (0, 1]; the particle number is N = round(nu*L).
    monitored_sites : tuple of int
        Distinct site indices subject to density monitoring.
    gamma : float
        Measurement rate (>= 0).
    """

    L: int
    J: float = 0.5
    pbc: bool = True
    nu: float = 0.25
    monitored_sites: tuple[int, ...] = (0,)
    gamma: float = 0.5

    def __post_init__(self):
        if not isinstance(self.L, int) or self.L < 2:
            raise ConfigError(f"lattice.L: need an integer >= 2, got {self.L!r}")
        if not np.isfinite(self.J):
            raise ConfigError(f"lattice.J: must be finite, got {self.J!r}")
        if not 0.0 < self.nu <= 1.0:
            raise ConfigError(f"lattice.nu: need filling in (0, 1], got {self.nu!r}")
        n = self.particle_count
        if not 1 <= n <= self.L:
            raise ConfigError(
                f"lattice.nu: round(nu*L) = {n} is outside [1, {self.L}]"
            )
        sites = tuple(self.monitored_sites)
        if len(set(sites)) != len(sites):
            raise ConfigError(f"lattice.monitored_sites: duplicates in {sites}")
        for j in sites:
            if not isinstance(j, (int, np.integer)) or not 0 <= j < self.L:
                raise ConfigError(
                    f"lattice.monitored_sites: index {j!r} outside [0, {self.L})"
                )
        object.__setattr__(self, "monitored_sites", sites)
        if self.gamma < 0:
            raise ConfigError(f"lattice.gamma: must be >= 0, got {self.gamma!r}")

    @property
    def particle_count(self) -> int:
        return int(round(self.nu * self.L))


@dataclass(frozen=True)
class SingleParticleOperator:
    """An L x L matrix acting on the single-particle space, tagged by kind."""

    matrix: np.ndarray = field(repr=False)
    kind: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(f"operator matrix must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_hermitian(self) -> bool:
        return bool(np.array_equal(self.matrix, self.matrix.conj().T))


def build_hopping(spec: LatticeSpec) -> SingleParticleOperator:
    """Nearest-neighbour hopping matrix, -J on the off-diagonals.

    With periodic boundaries the corner elements (0, L-1) and (L-1, 0)
    are -J as well.  The result is exactly Hermitian (real symmetric).
    """
    L = spec.L
    h = np.zeros((L, L), dtype=complex)
    for j in range(L - 1):
        h[j, j + 1] = -spec.J
        h[j + 1, j] = -spec.J
    if spec.pbc:
        h[0, L - 1] += -spec.J
        h[L - 1, 0] += -spec.J
    return SingleParticleOperator(matrix=h, kind=HOPPING)


def build_monitored_hamiltonian(
    h0: SingleParticleOperator, spec: LatticeSpec
) -> SingleParticleOperator:
    """Add the imaginary potential -i*gamma/2 at every monitored site.

    The output generates the deterministic (no-click) part of the
    monitored evolution; it is non-Hermitian for gamma > 0.
    """
    if h0.kind != HOPPING:
        raise ConfigError(f"expected a hopping operator, got kind={h0.kind!r}")
    h = np.array(h0.matrix, dtype=complex)
    for j in spec.monitored_sites:
        h[j, j] += -0.5j * spec.gamma
    return SingleParticleOperator(matrix=h, kind=NON_HERMITIAN_MONITORED)


def build_real_potential(
    h0: SingleParticleOperator, j0: int, gamma: float
) -> SingleParticleOperator:
    """Add the Hermitian scattering potential +gamma/2 at site j0."""
    if h0.kind != HOPPING:
        raise ConfigError(f"expected a hopping operator, got kind={h0.kind!r}")
    h = np.array(h0.matrix, dtype=complex)
    h[j0, j0] += 0.5 * gamma
    return SingleParticleOperator(matrix=h, kind=REAL_POTENTIAL)


def momentum_fill_order(L: int) -> list[int]:
    """Momentum integers m (k = 2*pi*m/L) in the tie-break order 0, +1, -1, +2, ..."""
    order = [0]
    for a in range(1, L // 2 + 1):
        order.append(a)
        if a != L - a:  # -a coincides with +a at the zone edge of even L
            order.append(-a)
    return order[:L]


def fermi_sea(spec: LatticeSpec) -> GaussianState:
    """Ground state of the hopping chain at filling nu, as plane-wave orbitals.

    Orbitals are the N = round(nu*L) plane waves exp(i*k*j)/sqrt(L) with the
    lowest band energy -2*J*cos(k).  When the Fermi level is degenerate
    (open shell) the momenta are filled in the deterministic order
    k = 0, +2pi/L, -2pi/L, +4pi/L, ... and an OpenShellWarning is emitted.
    """
    if not spec.pbc:
        raise ConfigError("fermi_sea requires periodic boundary conditions")
    L, N = spec.L, spec.particle_count
    ms = momentum_fill_order(L)
    energies = np.array([-2.0 * spec.J * np.cos(2.0 * np.pi * m / L) for m in ms])
    order = np.argsort(energies, kind="stable")
    chosen = [ms[i] for i in order[:N]]
    if N < L:
        scale = max(abs(spec.J), 1.0)
        if abs(energies[order[N - 1]] - energies[order[N]]) < _DEGENERACY_TOL * scale:
            warnings.warn(
                f"degenerate Fermi level at N={N} (L={L}, nu={spec.nu}); "
                "filling momenta in the order 0, +1, -1, +2, ...",
                OpenShellWarning,
                stacklevel=2,
            )
    j = np.arange(L)
    u = np.zeros((L, N), dtype=complex)
    for col, m in enumerate(chosen):
        u[:, col] = np.exp(2j * np.pi * m * j / L) / np.sqrt(L)
    return GaussianState(u)
