import numpy as np
import pytest

from monchain import fockspace
from monchain.lattice import LatticeSpec, build_hopping


def test_quadratic_many_body_two_sites_by_hand():
    # H = -J (c0^dag c1 + c1^dag c0) on basis |00>, |10>, |01>, |11>
    h = np.array([[0.0, -0.5], [-0.5, 0.0]])
    big = fockspace.quadratic_many_body(h)
    expected = np.zeros((4, 4), dtype=complex)
    expected[1, 2] = -0.5  # c0^dag c1 moves the particle from site 1 to site 0
    expected[2, 1] = -0.5
    assert np.array_equal(big, expected)


def test_quadratic_many_body_is_hermitian_for_hermitian_input():
    h = build_hopping(LatticeSpec(L=5, J=0.7)).matrix
    big = fockspace.quadratic_many_body(h)
    assert np.abs(big - big.conj().T).max() == 0


def test_quadratic_many_body_number_operator():
    h = np.zeros((3, 3))
    h[1, 1] = 1.0
    big = fockspace.quadratic_many_body(h)
    assert np.array_equal(np.diag(big).real, fockspace.number_diag(3, 1))
    assert np.count_nonzero(big - np.diag(np.diag(big))) == 0


def test_number_diag_bits():
    assert np.array_equal(fockspace.number_diag(2, 0), [0, 1, 0, 1])
    assert np.array_equal(fockspace.number_diag(2, 1), [0, 0, 1, 1])


def test_project_number_renormalizes():
    psi = np.array([0.0, 0.6, 0.8, 0.0], dtype=complex)
    kept = fockspace.project_number(psi, 2, 0, 1)
    assert np.allclose(kept, [0, 1, 0, 0], atol=1e-15)
    dropped = fockspace.project_number(psi, 2, 0, 0)
    assert np.allclose(dropped, [0, 0, 1, 0], atol=1e-15)
    with pytest.raises(ValueError):
        fockspace.project_number(np.array([1.0, 0, 0, 0], dtype=complex), 2, 0, 1)


def test_entanglement_entropy_of_bell_like_state():
    # (|10> + |01>)/sqrt(2): one fermion shared between the two halves
    psi = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)
    assert abs(fockspace.entanglement_entropy(psi, 2, 1) - np.log(2)) < 1e-12
    product = np.array([0, 1, 0, 0], dtype=complex)
    assert fockspace.entanglement_entropy(product, 2, 1) < 1e-12


def test_slater_amplitudes_antisymmetry_sign():
    # orbitals e0, e1 -> single occupied pattern 11 with amplitude det(I) = 1
    u = np.eye(2, dtype=complex)
    psi = fockspace.slater_amplitudes(u)
    assert np.allclose(psi, [0, 0, 0, 1], atol=1e-15)
    # swapping the orbital columns flips the sign of the determinant
    psi_swapped = fockspace.slater_amplitudes(u[:, ::-1])
    assert np.allclose(psi_swapped, [0, 0, 0, -1], atol=1e-15)


def test_step_propagator_is_unitary_for_hermitian_generator():
    h = build_hopping(LatticeSpec(L=4, J=0.5)).matrix
    m = fockspace.step_propagator(h, 0.3)
    assert np.abs(m @ m.conj().T - np.eye(16)).max() < 1e-12


def test_size_guards():
    with pytest.raises(ValueError):
        fockspace.quadratic_many_body(np.zeros((11, 11)))
    with pytest.raises(ValueError):
        fockspace.slater_amplitudes(np.zeros((13, 1)))
