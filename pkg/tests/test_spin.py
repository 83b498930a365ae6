import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nvshield import spin


def test_pauli_algebra():
    sx, sy, sz = spin.SIGMA_X, spin.SIGMA_Y, spin.SIGMA_Z
    assert np.allclose(sx @ sy - sy @ sx, 2j * sz)
    for s in (sx, sy, sz):
        assert np.allclose(s @ s, np.eye(2))


def test_phase_axis_matches_named_axes():
    assert np.allclose(spin.single_pauli(0.0), spin.SIGMA_X)
    assert np.allclose(spin.single_pauli(np.pi / 2), spin.SIGMA_Y)
    with pytest.raises(ValueError):
        spin.single_pauli("w")


def test_site_zero_is_leftmost_factor():
    op = spin.pauli_embed("z", 0, 2)
    assert np.allclose(op, np.kron(spin.SIGMA_Z, np.eye(2)))
    assert np.allclose(spin.site_signs(2), [[1, 1, -1, -1], [1, -1, 1, -1]])


def test_embed_is_read_only_and_validates():
    op = spin.pauli_embed("x", 1, 3)
    with pytest.raises(ValueError):
        op[0, 0] = 1.0
    with pytest.raises(ValueError):
        spin.pauli_embed("x", 3, 3)
    with pytest.raises(ValueError):
        spin.pauli_embed("x", 0, spin.MAX_SPINS + 1)


def test_two_spin_dipolar_spectrum():
    # triplet m=+-1: d/4, triplet m=0: -d/2, singlet: 0
    d = 2.7
    h = spin.build_dipolar(np.array([[0, d], [d, 0]]), 2)
    assert np.allclose(np.sort(np.linalg.eigvalsh(h)), np.sort([d / 4, d / 4, -d / 2, 0.0]))


def test_dipolar_rejects_bad_matrices():
    with pytest.raises(ValueError):
        spin.build_dipolar(np.array([[0, 1.0], [2.0, 0]]), 2)
    with pytest.raises(ValueError):
        spin.build_dipolar(np.array([[1.0, 1.0], [1.0, 0]]), 2)
    with pytest.raises(ValueError):
        spin.build_dipolar(np.zeros((3, 3)), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_dipolar_hermitian_and_conserves_total_sz(q, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(q, q))
    d = d + d.T
    np.fill_diagonal(d, 0.0)
    h = spin.build_dipolar(d, q)
    assert spin.is_hermitian(h)
    sz = spin.collective("z", q)
    assert np.allclose(h @ sz, sz @ h)
    assert np.trace(h) == pytest.approx(0.0, abs=1e-12)


def test_control_single_spin_rotation():
    # exp(-i pi/2 S_y) takes |0> (+z) to +x
    h = spin.build_control(np.pi / 2, np.pi / 2, 0.0, 1)
    u = expm(-1j * h)
    rho = u @ spin.polarized_state(1) @ u.conj().T
    assert spin.expectation(rho, spin.SIGMA_X) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        spin.build_control(-1.0, 0.0, 0.0, 1)


def test_drift_diagonal_batched_matches_single():
    xi = np.array([[1.0, 2.0], [3.0, -1.0]])
    batched = spin.drift_diagonal(xi, 0.5)
    for col in range(2):
        assert np.allclose(batched[:, col], spin.drift_diagonal(xi[:, col], 0.5))
    full = spin.build_drift(xi[:, 0], 2.0, 0.25, 2)
    expected = 0.5 * ((xi[0, 0] + 0.5) * spin.pauli_embed("z", 0, 2)
                      + (xi[1, 0] + 0.5) * spin.pauli_embed("z", 1, 2))
    assert np.allclose(full, expected)


def test_states_and_expectation():
    q = 3
    rho = spin.x_polarized_state(q)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert spin.expectation(rho, spin.collective("x", q)) == pytest.approx(q)
    assert spin.expectation(spin.maximally_mixed(q), spin.collective("z", q)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        spin.expectation(rho, spin.SIGMA_X)
    with pytest.raises(ValueError):
        spin.expectation(np.eye(2, dtype=complex), 1j * np.eye(2))


def test_hamiltonian_terms_total():
    terms = spin.HamiltonianTerms(np.eye(2), 2 * np.eye(2), 3 * np.eye(2))
    assert np.allclose(terms.total, 6 * np.eye(2))
