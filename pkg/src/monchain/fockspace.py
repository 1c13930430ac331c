"""Exact many-body (2^L) reference implementation for small chains.

Used as an independent oracle: states are full amplitude vectors over the
occupation basis, operators are dense 2^L x 2^L matrices built with
Jordan-Wigner signs, and nothing here touches the correlation-matrix
machinery it is meant to validate.

Basis convention: bit j of the integer index holds the occupation of
site j, and the basis ket is (c0^dag)^{n0} (c1^dag)^{n1} ... |vacuum>.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
import scipy.linalg

MAX_SITES_AMPLITUDES = 12
MAX_SITES_OPERATOR = 10


def _check(L: int, limit: int):
    if L > limit:
        raise ValueError(f"Fock-space oracle limited to L <= {limit}, got L={L}")


def _jw_sign(bits: int, j: int) -> int:
    """Parity of occupied sites below j (sign picked up by c_j / c_j^dag)."""
    return -1 if bin(bits & ((1 << j) - 1)).count("1") % 2 else 1


def slater_amplitudes(u: np.ndarray) -> np.ndarray:
    """Amplitude vector of the Slater determinant with orbital columns u.

    The amplitude on the pattern with occupied sites j1 < ... < jN is
    det(u[(j1..jN), :]).  For orthonormal columns the result has unit norm.
    """
    u = np.asarray(u, dtype=complex)
    L, N = u.shape
    _check(L, MAX_SITES_AMPLITUDES)
    psi = np.zeros(2**L, dtype=complex)
    for rows in combinations(range(L), N):
        m = sum(1 << j for j in rows)
        psi[m] = np.linalg.det(u[list(rows), :])
    return psi


def quadratic_many_body(h: np.ndarray) -> np.ndarray:
    """Dense 2^L x 2^L matrix of sum_ij h[i,j] c_i^dag c_j."""
    h = np.asarray(h, dtype=complex)
    L = h.shape[0]
    _check(L, MAX_SITES_OPERATOR)
    dim = 2**L
    out = np.zeros((dim, dim), dtype=complex)
    nz = [(i, j) for i in range(L) for j in range(L) if h[i, j] != 0]
    for m in range(dim):
        for i, j in nz:
            if not (m >> j) & 1:
                continue
            sj = _jw_sign(m, j)
            m1 = m ^ (1 << j)
            if (m1 >> i) & 1:
                continue
            si = _jw_sign(m1, i)
            out[m1 | (1 << i), m] += h[i, j] * si * sj
    return out


def number_diag(L: int, j: int) -> np.ndarray:
    """Diagonal of the number operator n_j in the occupation basis."""
    _check(L, MAX_SITES_AMPLITUDES)
    m = np.arange(2**L)
    return ((m >> j) & 1).astype(float)


def occupations_vector(psi: np.ndarray, L: int) -> np.ndarray:
    """Site densities <n_j> of a normalized amplitude vector."""
    w = np.abs(psi) ** 2
    return np.array([np.sum(w * number_diag(L, j)) for j in range(L)])


def project_number(psi: np.ndarray, L: int, j: int, outcome: int) -> np.ndarray:
    """Apply n_j (outcome 1) or 1 - n_j (outcome 0) and renormalize."""
    mask = number_diag(L, j) if outcome == 1 else 1.0 - number_diag(L, j)
    out = psi * mask
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        raise ValueError(f"projection outcome {outcome} at site {j} has zero weight")
    return out / norm


def reduced_density_matrix(psi: np.ndarray, L: int, ell: int) -> np.ndarray:
    """Reduced density matrix of the contiguous block [0, ell)."""
    mat = psi.reshape(2 ** (L - ell), 2**ell).T
    return mat @ mat.conj().T


def entanglement_entropy(psi: np.ndarray, L: int, ell: int) -> float:
    """Von Neumann entropy (nats) of the block [0, ell) from the exact state."""
    lams = np.linalg.eigvalsh(reduced_density_matrix(psi, L, ell))
    lams = lams[lams > 1e-14]
    return float(-np.sum(lams * np.log(lams)))


def expectation(psi: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, op @ psi)))


def step_propagator(h_single: np.ndarray, dt: float) -> np.ndarray:
    """Many-body propagator exp(-i * H * dt) of the quadratic H given by h_single."""
    return scipy.linalg.expm(-1j * dt * quadratic_many_body(h_single))
