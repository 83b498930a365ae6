"""Operator algebra for clusters of ``q`` two-level spins.

Operators are dense complex ``numpy`` arrays of shape ``(2**q, 2**q)``.
Site 0 is the leftmost (most significant) Kronecker factor. Hamiltonians
carry angular frequencies (rad/s); spin operators are ``S = sigma / 2``.
"""

from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Union

import numpy as np

MAX_SPINS = 12

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

Axis = Union[str, float]


def _check_q(q: int) -> None:
    if not 1 <= q <= MAX_SPINS:
        raise ValueError(f"cluster size q={q} outside supported range 1..{MAX_SPINS}")


def single_pauli(axis: Axis) -> np.ndarray:
    """2x2 Pauli matrix for ``'x'``, ``'y'``, ``'z'`` or an in-plane phase (radians)."""
    if isinstance(axis, str):
        try:
            return _PAULI[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    phi = float(axis)
    return np.cos(phi) * SIGMA_X + np.sin(phi) * SIGMA_Y


@lru_cache(maxsize=512)
def _embed_cached(axis: Axis, site: int, q: int) -> np.ndarray:
    factors = [IDENTITY] * q
    factors[site] = single_pauli(axis)
    op = reduce(np.kron, factors)
    op.flags.writeable = False
    return op


def pauli_embed(axis: Axis, site: int, q: int) -> np.ndarray:
    """Return ``1 x ... x sigma^axis x ... x 1`` with the Pauli matrix at ``site``.

    ``axis`` is ``'x'``, ``'y'``, ``'z'`` or a float phase ``phi`` selecting
    ``cos(phi) sigma^x + sin(phi) sigma^y``. The returned array is read-only.
    """
    _check_q(q)
    if not 0 <= site < q:
        raise ValueError(f"site {site} out of range for q={q}")
    if not isinstance(axis, str):
        axis = float(axis)
    return _embed_cached(axis, site, q)


@lru_cache(maxsize=32)
def site_signs(q: int) -> np.ndarray:
    """Diagonal of ``sigma^z_i`` for every site, shape ``(q, 2**q)``, entries +-1."""
    _check_q(q)
    idx = np.arange(2**q)
    bits = (idx[None, :] >> (q - 1 - np.arange(q))[:, None]) & 1
    signs = 1.0 - 2.0 * bits
    signs.flags.writeable = False
    return signs


def collective(axis: Axis, q: int) -> np.ndarray:
    """``sum_i sigma_i^axis``."""
    return sum(pauli_embed(axis, i, q) for i in range(q))


def is_hermitian(op: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(op), 1.0)
    return bool(np.linalg.norm(op - op.conj().T) <= rtol * scale)


def build_dipolar(couplings: np.ndarray, q: int) -> np.ndarray:
    """Secular dipolar Hamiltonian ``sum_{i<j} d_ij [SzSz - (SxSx + SySy)/2]``.

    Parameters
    ----------
    couplings : (q, q) array
        Symmetric secular couplings ``d_ij`` in rad/s with zero diagonal.
    """
    _check_q(q)
    d = np.asarray(couplings, dtype=float)
    if d.shape != (q, q):
        raise ValueError(f"coupling matrix shape {d.shape} does not match q={q}")
    scale = max(np.abs(d).max(initial=0.0), 1.0)
    if not np.allclose(d, d.T, rtol=0, atol=1e-12 * scale):
        raise ValueError("coupling matrix is not symmetric")
    if np.any(np.abs(np.diag(d)) > 1e-12 * scale):
        raise ValueError("coupling matrix has a non-zero diagonal")

    dim = 2**q
    h = np.zeros((dim, dim), dtype=complex)
    signs = site_signs(q)
    for i in range(q):
        for j in range(i + 1, q):
            if d[i, j] == 0.0:
                continue
            zz = signs[i] * signs[j] / 4.0
            flip = (pauli_embed("x", i, q) @ pauli_embed("x", j, q)
                    + pauli_embed("y", i, q) @ pauli_embed("y", j, q)) / 4.0
            h += d[i, j] * (np.diag(zz) - 0.5 * flip)
    return h


def build_control(omega: float, phase: float, detuning: float, q: int) -> np.ndarray:
    """``sum_i [detuning S_i^z + omega S_i^phase]`` in rad/s."""
    if omega < 0:
        raise ValueError("omega must be non-negative")
    _check_q(q)
    single = 0.5 * (detuning * SIGMA_Z + omega * single_pauli(float(phase)))
    return _sum_single_site(single, q)


def build_drift(xi, b_value: float, gamma_e: float, q: int) -> np.ndarray:
    """``sum_i (xi_i + gamma_e b) S_i^z``; diagonal, rad/s."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (q,):
        raise ValueError(f"xi has shape {xi.shape}, expected ({q},)")
    return np.diag(drift_diagonal(xi, gamma_e * b_value))


def drift_diagonal(xi: np.ndarray, b_shift: float = 0.0) -> np.ndarray:
    """Diagonal of ``sum_i (xi_i + b_shift) S_i^z``.

    ``xi`` may be ``(q,)`` or batched ``(q, n)``; the result then has shape
    ``(2**q, n)``.
    """
    xi = np.asarray(xi, dtype=float)
    signs = site_signs(xi.shape[0])
    if xi.ndim == 2:
        return 0.5 * (signs.T @ (xi + b_shift))
    return 0.5 * (xi + b_shift) @ signs


def _sum_single_site(single: np.ndarray, q: int) -> np.ndarray:
    dim = 2**q
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(q):
        left = np.eye(2**i)
        right = np.eye(2 ** (q - 1 - i))
        out += np.kron(np.kron(left, single), right)
    return out


def product_state(single: np.ndarray, q: int) -> np.ndarray:
    """Density matrix ``single x single x ... x single``."""
    return reduce(np.kron, [np.asarray(single, dtype=complex)] * q)


def polarized_state(q: int) -> np.ndarray:
    """All spins in ``|0>`` (the +z eigenstate)."""
    rho = np.zeros((2**q, 2**q), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def x_polarized_state(q: int) -> np.ndarray:
    """``prod_j (1 + sigma_j^x) / 2``, trace one."""
    return product_state(0.5 * (IDENTITY + SIGMA_X), q)


def maximally_mixed(q: int) -> np.ndarray:
    return np.eye(2**q, dtype=complex) / 2**q


def expectation(state: np.ndarray, obs: np.ndarray, imag_tol: float = 1e-10) -> float:
    """``Tr(rho obs)`` as a real number.

    Raises ``ValueError`` on a dimension mismatch or when the imaginary
    part exceeds ``imag_tol`` (relative to ``max(1, |Tr|)``).
    """
    if state.shape != obs.shape:
        raise ValueError(f"dimension mismatch: state {state.shape}, observable {obs.shape}")
    value = np.einsum("ij,ji->", state, obs)
    if abs(value.imag) > imag_tol * max(1.0, abs(value.real)):
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


@dataclass(frozen=True)
class HamiltonianTerms:
    """The three summands of the rotating-frame Hamiltonian (rad/s)."""

    drift: np.ndarray
    dipolar: np.ndarray
    control: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.drift + self.dipolar + self.control
