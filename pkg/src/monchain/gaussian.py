"""Slater-determinant states and their observables.

A pure Gaussian state of N fermions on L sites is stored as an L x N
complex orbital matrix U with orthonormal columns (rows = sites).  Every
observable used here derives from the correlation matrix

    C[i, j] = sum_k U[i, k] * conj(U[j, k])          (C = U @ U^dagger)

whose entries are C[i, j] = <c_j^dagger c_i> in the fixed convention of
this package, so the diagonal holds the site occupations.  The bipartite
von Neumann entropy of a block follows from the eigenvalues of the block
of C restricted to it, and the tight-binding energy from Re Tr(h @ C).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateStateError, NumericalIntegrityError

if TYPE_CHECKING:
    from .lattice import SingleParticleOperator

ENTROPY_CLAMP = 1e-12
_BLOCK_HERMITICITY_TOL = 1e-8
_EIGENVALUE_WINDOW = 1e-8
_RANK_TOL = 1e-14


class GaussianState:
    """An N-fermion Slater determinant on L sites, held as its orbital matrix."""

    __slots__ = ("U",)

    def __init__(self, orbitals: np.ndarray):
        u = np.asarray(orbitals, dtype=complex)
        if u.ndim != 2:
            raise ValueError(f"orbital matrix must be 2-D, got shape {u.shape}")
        if not 1 <= u.shape[1] <= u.shape[0]:
            raise ValueError(
                f"need 1 <= N <= L orbital columns, got shape {u.shape}"
            )
        if not np.all(np.isfinite(u)):
            raise NumericalIntegrityError("orbital matrix contains non-finite entries")
        self.U = u

    @property
    def L(self) -> int:
        return self.U.shape[0]

    @property
    def N(self) -> int:
        return self.U.shape[1]

    def orthonormality_defect(self) -> float:
        """Max-norm deviation of U^dagger U from the identity."""
        g = self.U.conj().T @ self.U
        return float(np.abs(g - np.eye(self.N)).max())

    def copy(self) -> "GaussianState":
        return GaussianState(self.U.copy())


@dataclass(frozen=True)
class CorrelationBlock:
    """The correlation matrix restricted to a contiguous range of sites."""

    sites: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def correlation_matrix(state: GaussianState) -> np.ndarray:
    """Full L x L correlation matrix C = U @ U^dagger."""
    return state.U @ state.U.conj().T


def correlation_block(
    state: GaussianState, ell: int, offset: int = 0
) -> CorrelationBlock:
    """Block of C on the contiguous range of `ell` sites starting at `offset`.

    The range wraps around the chain (periodic indexing), so with the
    default offset 0 this is the top-left ell x ell block of C.  Diagonal
    entries are the site occupations.
    """
    if not 1 <= ell <= state.L:
        raise ValueError(f"subsystem size {ell} outside [1, {state.L}]")
    sites = (offset + np.arange(ell)) % state.L
    ua = state.U[sites, :]
    return CorrelationBlock(sites=sites, matrix=ua @ ua.conj().T)


def occupation(state: GaussianState, j: int) -> float:
    """Density <n_j> at site j, clamped to [0, 1]."""
    if not 0 <= j < state.L:
        raise ValueError(f"site {j} outside [0, {state.L})")
    n = float(np.real(np.vdot(state.U[j, :], state.U[j, :])))
    return min(max(n, 0.0), 1.0)


def occupations(state: GaussianState) -> np.ndarray:
    """All site densities at once (the real diagonal of C)."""
    return np.clip(np.einsum("jk,jk->j", state.U.conj(), state.U).real, 0.0, 1.0)


def entropy_from_eigenvalues(lams: np.ndarray, clamp: float = ENTROPY_CLAMP) -> float:
    """Binary-entropy sum over correlation eigenvalues, each clamped away from 0 and 1."""
    lam = np.clip(np.asarray(lams, dtype=float), clamp, 1.0 - clamp)
    return float(np.sum(-lam * np.log(lam) - (1.0 - lam) * np.log(1.0 - lam)))


def entanglement_entropy(state: GaussianState, ell: int, offset: int = 0) -> float:
    """Von Neumann entropy (nats) of the contiguous block of `ell` sites.

    Computed as sum_l [-l*ln(l) - (1-l)*ln(1-l)] over the eigenvalues of
    the correlation block.  Raises NumericalIntegrityError if the block
    is not Hermitian within tolerance or its spectrum strays outside
    [0, 1] by more than the allowed window.
    """
    if not 1 <= ell < state.L:
        raise ValueError(f"subsystem size {ell} outside [1, {state.L})")
    block = correlation_block(state, ell, offset).matrix
    defect = float(np.abs(block - block.conj().T).max())
    if defect > _BLOCK_HERMITICITY_TOL:
        raise NumericalIntegrityError(
            f"correlation block non-Hermitian; defect {defect:.3e}"
        )
    lams = np.linalg.eigvalsh(block)
    if lams.min() < -_EIGENVALUE_WINDOW or lams.max() > 1.0 + _EIGENVALUE_WINDOW:
        raise NumericalIntegrityError(
            f"correlation eigenvalues outside [0, 1]: "
            f"[{lams.min():.3e}, {lams.max():.3e}]"
        )
    s = entropy_from_eigenvalues(lams)
    bound = min(ell, state.N, state.L - ell, state.L - state.N) * np.log(2.0)
    if s > bound + 1e-8:
        raise NumericalIntegrityError(
            f"entropy {s:.6f} exceeds the rank bound {bound:.6f}"
        )
    return s


def energy(state: GaussianState, h0: "SingleParticleOperator") -> float:
    """Expectation value of the hopping Hamiltonian, Re Tr(h0 @ C)."""
    from .lattice import HOPPING

    if h0.kind != HOPPING:
        raise ValueError(f"energy expects a hopping operator, got kind={h0.kind!r}")
    return quadratic_expectation(state, h0.matrix)


def quadratic_expectation(state: GaussianState, matrix: np.ndarray) -> float:
    """Re Tr(matrix @ C) for an arbitrary L x L single-particle matrix."""
    if matrix.shape != (state.L, state.L):
        raise ValueError(
            f"operator shape {matrix.shape} does not match L={state.L}"
        )
    return float(np.sum(state.U.conj() * (matrix @ state.U)).real)


def orthonormalize_columns(u: np.ndarray) -> np.ndarray:
    """QR-orthonormalize the columns of u, preserving their span."""
    q, r = np.linalg.qr(u)
    rdiag = np.abs(np.diag(r))
    if rdiag.min() < _RANK_TOL:
        raise DegenerateStateError(
            f"orbital matrix is rank deficient (min |R_kk| = {rdiag.min():.3e})"
        )
    return q


def reorthonormalize(state: GaussianState) -> GaussianState:
    """Restore exact column orthonormality without changing the spanned subspace."""
    return GaussianState(orthonormalize_columns(state.U))


def fock_oracle_expand(state: GaussianState) -> np.ndarray:
    """Exact many-body amplitudes of the state over the 2^L occupation basis.

    Intended for cross-validation at small L only (guarded at L <= 12).
    The amplitude of the pattern with occupied sites j1 < ... < jN is the
    determinant of those rows of U.
    """
    from . import fockspace

    return fockspace.slater_amplitudes(state.U)
