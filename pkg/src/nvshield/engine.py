"""Time propagation of NV clusters under compiled schedules.

Two routes are provided:

* :func:`propagate_segment` evolves a density matrix through one segment
  with an exact matrix exponential obtained from ``eigh``.
* :func:`evolve_batch` evolves a batch of pure states, one per column, that
  share the cluster and schedule but differ in disorder and signal
  amplitude. Each sub-step applies ``exp(-i H dt)`` through a Chebyshev
  expansion converged to machine precision; the shared control and
  dipolar part is a single matrix and the per-column disorder and signal
  part is diagonal. This is the workhorse for ensemble runs.

Within a sub-step the signal term uses the exact time average of ``B(t)``
over the sub-step.
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import jv

from . import spin
from .constants import DISORDER_STD_HZ, GAMMA_E, RABI_ERROR, SIGNAL_AMPLITUDE, TWO_PI
from .geometry import Cluster
from .sequences import PulseSegment, Schedule

MAX_ENGINE_SPINS = 8
SUBSTEPS_PER_SIGNAL_PERIOD = 50


@dataclass(frozen=True)
class NoiseSpec:
    """Quasi-static disorder (std in rad/s) and a constant fractional Rabi error."""

    disorder_std: float = TWO_PI * DISORDER_STD_HZ
    rabi_error: float = RABI_ERROR
    disorder_resample: str = "per_cluster"

    def __post_init__(self):
        if self.disorder_std < 0:
            raise ValueError("disorder_std must be non-negative")
        if not abs(self.rabi_error) < 0.5:
            raise ValueError("|rabi_error| must be below 0.5")
        if self.disorder_resample not in ("per_measurement", "per_cluster"):
            raise ValueError(f"unknown disorder_resample {self.disorder_resample!r}")

    @classmethod
    def off(cls) -> "NoiseSpec":
        return cls(disorder_std=0.0, rabi_error=0.0)

    def draw(self, rng: np.random.Generator, q: int, n: Optional[int] = None) -> np.ndarray:
        size = (q,) if n is None else (q, n)
        if self.disorder_std == 0:
            return np.zeros(size)
        return rng.normal(0.0, self.disorder_std, size=size)


@dataclass(frozen=True)
class SignalSpec:
    """Target field ``B(t) = amplitude * cos(2 pi frequency (t - origin) + phase)``.

    ``frequency=None`` locks to the schedule's modulation frequency and
    ``origin=None`` to its phase reference (see :meth:`resolve`). With
    ``waveform='sin'`` the field is ``sin(2 pi f (t - origin + T/4) + phase)``,
    i.e. a sine whose zero crossing is moved a quarter period so that it
    stays phase locked; the resulting field is numerically the cosine one.
    """

    amplitude: float = SIGNAL_AMPLITUDE
    frequency: Optional[float] = None
    phase: float = 0.0
    waveform: str = "cos"
    origin: Optional[float] = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("signal amplitude must be non-negative")
        if self.waveform not in ("cos", "sin"):
            raise ValueError(f"unknown waveform {self.waveform!r}")

    def resolve(self, schedule: Schedule) -> "SignalSpec":
        freq = schedule.first_harmonic if self.frequency is None else self.frequency
        origin = schedule.signal_origin if self.origin is None else self.origin
        return replace(self, frequency=freq, origin=origin)

    def _argument(self, t):
        omega = TWO_PI * (self.frequency or 0.0)
        return omega * (np.asarray(t) - (self.origin or 0.0)) + self.phase

    def field(self, t):
        """``B(t)`` in Tesla."""
        return self.amplitude * np.cos(self._argument(t))

    def mean_shape(self, t1: float, t2: float) -> float:
        """Average of ``B(t) / amplitude`` over ``[t1, t2]``."""
        omega = TWO_PI * (self.frequency or 0.0)
        if omega == 0.0 or t2 == t1:
            return float(np.cos(self._argument(0.5 * (t1 + t2))))
        return float((np.sin(self._argument(t2)) - np.sin(self._argument(t1))) / (omega * (t2 - t1)))


@dataclass(frozen=True)
class RunResult:
    population: float
    per_site: np.ndarray
    q: int


def substeps(segment: PulseSegment, signal: SignalSpec, refine: int = 1) -> int:
    """Number of sub-steps for ``segment``.

    Sub-steps are no longer than ``1/(50 f_signal)``; ``refine`` multiplies
    the count.
    """
    if segment.is_ideal:
        return 1
    n = 1
    if signal.frequency:
        n = int(np.ceil(segment.duration * signal.frequency * SUBSTEPS_PER_SIGNAL_PERIOD - 1e-9))
    return max(n, 1) * refine


def ideal_rotation(angle: float, phase: float, q: int) -> np.ndarray:
    """``exp(-i angle sum_j S_j^phase)`` as a ``2**q`` matrix."""
    single = (np.cos(angle / 2) * spin.IDENTITY
              - 1j * np.sin(angle / 2) * spin.single_pauli(float(phase)))
    return spin.product_state(single, q)


def _check_cluster(cluster: Cluster) -> None:
    if cluster.q > MAX_ENGINE_SPINS:
        raise ValueError(f"cluster of {cluster.q} NVs exceeds engine limit {MAX_ENGINE_SPINS}")


def _checked_signal(signal: SignalSpec) -> SignalSpec:
    if signal.amplitude > 0 and signal.frequency is None:
        raise ValueError("signal frequency unresolved; call SignalSpec.resolve(schedule)")
    return signal


# ---------------------------------------------------------------------------
# density-matrix route


def segment_hamiltonian(segment: PulseSegment, cluster: Cluster, xi, b_value: float,
                        rabi_error: float = 0.0, gamma_e: float = GAMMA_E) -> spin.HamiltonianTerms:
    q = cluster.q
    return spin.HamiltonianTerms(
        drift=spin.build_drift(xi, b_value, gamma_e, q),
        dipolar=spin.build_dipolar(cluster.d, q),
        control=spin.build_control(segment.omega * (1 + rabi_error), segment.phase,
                                   segment.detuning, q),
    )


def propagate_segment(state: np.ndarray, segment: PulseSegment, cluster: Cluster, xi,
                      signal: SignalSpec, t0: float, rabi_error: float = 0.0,
                      refine: int = 1, gamma_e: float = GAMMA_E) -> np.ndarray:
    """Evolve density matrix ``state`` through ``segment`` starting at time ``t0``.

    Each sub-step applies ``U = exp(-i H dt)`` from the eigendecomposition
    of the Hermitian sub-step Hamiltonian.
    """
    _check_cluster(cluster)
    signal = _checked_signal(signal)
    q = cluster.q
    if state.shape != (2**q, 2**q):
        raise ValueError(f"state shape {state.shape} does not match q={q}")
    if segment.is_ideal:
        U = ideal_rotation(segment.angle * (1 + rabi_error), segment.phase, q)
        return U @ state @ U.conj().T

    n = substeps(segment, signal, refine)
    dt = segment.duration / n
    static = (spin.build_dipolar(cluster.d, q)
              + spin.build_control(segment.omega * (1 + rabi_error), segment.phase,
                                   segment.detuning, q))
    xi = np.asarray(xi, dtype=float)
    for k in range(n):
        t1 = t0 + k * dt
        b = signal.amplitude * signal.mean_shape(t1, t1 + dt)
        H = static + spin.build_drift(xi, b, gamma_e, q)
        if not np.all(np.isfinite(H)):
            raise FloatingPointError("non-finite Hamiltonian entries")
        evals, evecs = np.linalg.eigh(H)
        U = (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T
        state = U @ state @ U.conj().T
    return state


def purity_check(state: np.ndarray) -> float:
    """``Tr(rho^2)``."""
    return float(np.real(np.einsum("ij,ji->", state, state)))


# ---------------------------------------------------------------------------
# batched state-vector route


def _chebyshev_step(H: np.ndarray, bounds: Tuple[float, float], diag: np.ndarray,
                    psi: np.ndarray, dt: float, tol: float = 1e-16) -> np.ndarray:
    """``exp(-i (H + diag(D_col)) dt)`` applied to every column of ``psi``."""
    emin = bounds[0] + diag.min()
    emax = bounds[1] + diag.max()
    centre = 0.5 * (emax + emin)
    half = max(0.5 * (emax - emin), 1e-300)
    x = half * dt
    n_terms = int(x + 10.0 * np.cbrt(x) + 20)
    bessel = jv(np.arange(n_terms), x)
    keep = np.nonzero(np.abs(bessel) > tol)[0]
    n_terms = int(keep[-1]) + 1 if keep.size else 1
    coeff = bessel[:n_terms] * (-1j) ** np.arange(n_terms)
    coeff[1:] *= 2.0

    shifted = (diag - centre) / half
    Hs = H / half

    def apply(v):
        return Hs @ v + shifted * v

    prev = psi
    acc = coeff[0] * prev
    if n_terms > 1:
        cur = apply(psi)
        acc = acc + coeff[1] * cur
        for k in range(2, n_terms):
            prev, cur = cur, 2.0 * apply(cur) - prev
            acc += coeff[k] * cur
    return np.exp(-1j * centre * dt) * acc


class _StaticCache:
    """Per-cluster cache of control-plus-dipolar matrices and their spectral bounds."""

    def __init__(self, cluster: Cluster, rabi_error: float):
        self.q = cluster.q
        self.dipolar = spin.build_dipolar(cluster.d, cluster.q)
        self.rabi_error = rabi_error
        self._static: Dict[tuple, Tuple[np.ndarray, Tuple[float, float]]] = {}
        self._ideal: Dict[tuple, np.ndarray] = {}

    def static(self, seg: PulseSegment):
        key = (seg.omega, seg.phase, seg.detuning)
        if key not in self._static:
            H = self.dipolar + spin.build_control(seg.omega * (1 + self.rabi_error), seg.phase,
                                                  seg.detuning, self.q)
            evals = np.linalg.eigvalsh(H)
            pad = 1e-12 * max(1.0, np.abs(evals).max())
            self._static[key] = (H, (evals[0] - pad, evals[-1] + pad))
        return self._static[key]

    def ideal(self, seg: PulseSegment) -> np.ndarray:
        key = (seg.angle, seg.phase)
        if key not in self._ideal:
            self._ideal[key] = ideal_rotation(seg.angle * (1 + self.rabi_error), seg.phase, self.q)
        return self._ideal[key]


def evolve_batch(cluster: Cluster, schedule: Schedule, xi: np.ndarray, amplitudes,
                 signal: SignalSpec, rabi_error: float = 0.0, refine: int = 1,
                 psi0: Optional[np.ndarray] = None, gamma_e: float = GAMMA_E) -> np.ndarray:
    """Evolve ``n`` pure states through the whole schedule.

    Parameters
    ----------
    xi : (q, n) array
        Disorder shifts (rad/s), one column per state.
    amplitudes : (n,) array
        Signal amplitude (T) per column; the waveform comes from ``signal``.
    psi0 : (2**q,) or (2**q, n) array, optional
        Initial states; defaults to all spins in ``|0>``.

    Returns
    -------
    (2**q, n) complex array of final states.
    """
    _check_cluster(cluster)
    signal = _checked_signal(signal.resolve(schedule))
    q = cluster.q
    xi = np.asarray(xi, dtype=float).reshape(q, -1)
    amplitudes = np.broadcast_to(np.asarray(amplitudes, dtype=float), (xi.shape[1],))
    n = xi.shape[1]
    dim = 2**q
    if psi0 is None:
        psi = np.zeros((dim, n), dtype=complex)
        psi[0] = 1.0
    else:
        psi = np.array(np.broadcast_to(np.asarray(psi0, dtype=complex).reshape(dim, -1), (dim, n)))

    cache = _StaticCache(cluster, rabi_error)
    disorder = spin.drift_diagonal(xi)  # (dim, n)
    field_diag = spin.drift_diagonal(np.ones((q, 1)))[:, 0] * gamma_e  # per tesla
    t = 0.0
    for seg in schedule.segments:
        if seg.is_ideal:
            psi = cache.ideal(seg) @ psi
            continue
        H, bounds = cache.static(seg)
        steps = substeps(seg, signal, refine)
        dt = seg.duration / steps
        for k in range(steps):
            t1 = t + k * dt
            shape = signal.mean_shape(t1, t1 + dt)
            diag = disorder + np.outer(field_diag, amplitudes * shape)
            psi = _chebyshev_step(H, bounds, diag, psi, dt)
        t += seg.duration
    return psi


def site_expectations(psi: np.ndarray, axis: str = "z") -> np.ndarray:
    """Per-site Pauli expectations for state vectors ``psi`` of shape ``(2**q,)`` or ``(2**q, n)``."""
    psi = np.asarray(psi)
    single = psi.ndim == 1
    psi = psi.reshape(psi.shape[0], -1)
    q = int(round(np.log2(psi.shape[0])))
    if axis == "z":
        out = spin.site_signs(q) @ (np.abs(psi) ** 2)
    else:
        out = np.array([np.real(np.einsum("in,ij,jn->n", psi.conj(), spin.pauli_embed(axis, i, q), psi))
                        for i in range(q)])
    return out[:, 0] if single else out


def run_batch(cluster: Cluster, schedule: Schedule, xi: np.ndarray, amplitudes,
              signal: SignalSpec, rabi_error: float = 0.0, refine: int = 1) -> np.ndarray:
    """Per-site ``<sigma^z>`` after the schedule, shape ``(q, n)``."""
    psi = evolve_batch(cluster, schedule, xi, amplitudes, signal, rabi_error, refine)
    return site_expectations(psi, "z")


def run_schedule(cluster: Cluster, schedule: Schedule, noise: NoiseSpec = NoiseSpec(),
                 signal: SignalSpec = SignalSpec(), rng: Optional[np.random.Generator] = None,
                 method: str = "chebyshev", refine: int = 1) -> RunResult:
    """Run one measurement: draw disorder, apply every segment, read out ``sigma^z``.

    ``method='density'`` uses :func:`propagate_segment` on the density
    matrix; the default uses the batched state-vector propagator.
    """
    rng = np.random.default_rng() if rng is None else rng
    q = cluster.q
    xi = noise.draw(rng, q)
    signal = signal.resolve(schedule)
    if method == "chebyshev":
        per_site = run_batch(cluster, schedule, xi[:, None], [signal.amplitude], signal,
                             noise.rabi_error, refine)[:, 0]
    elif method == "density":
        rho = evolve_density(cluster, schedule, xi, signal, noise.rabi_error, refine)
        per_site = np.array([spin.expectation(rho, spin.pauli_embed("z", i, q)) for i in range(q)])
    else:
        raise ValueError(f"unknown method {method!r}")
    return RunResult(population=float(per_site.sum()), per_site=per_site, q=q)


def evolve_density(cluster: Cluster, schedule: Schedule, xi, signal: SignalSpec,
                   rabi_error: float = 0.0, refine: int = 1,
                   rho0: Optional[np.ndarray] = None) -> np.ndarray:
    """Density-matrix evolution through the whole schedule."""
    signal = signal.resolve(schedule)
    rho = spin.polarized_state(cluster.q) if rho0 is None else rho0
    for t0, seg in zip(schedule.start_times(), schedule.segments):
        rho = propagate_segment(rho, seg, cluster, xi, signal, float(t0), rabi_error, refine)
    return rho
