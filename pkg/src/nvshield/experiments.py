"""Ensemble campaigns: AERIS traces, chemical-shift fits, concentration sweeps.

An AERIS record is ``n_sr`` short measurements spaced by ``tau``; the
target field of measurement ``k`` has amplitude ``B_t cos(2 pi delta tau k)``.
Ensemble traces average the per-NV readout over ``Q`` sampled clusters:

    sigma_bar[k] = (1/Q) sum_c (1/q_c) <sum_i sigma_i^z>_c[k]

Every cluster gets its own generator derived from ``(seed, stream, index)``,
so results do not depend on the number of worker threads.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from .constants import (ACTIVE_VOLUME, CHEMICAL_SHIFT_HZ, MEASUREMENT_INTERVAL, N_MEASUREMENTS,
                        SIGNAL_AMPLITUDE, TWO_PI)
from .engine import MAX_ENGINE_SPINS, NoiseSpec, SignalSpec, run_batch
from .geometry import Cluster, LatticeConfig, SamplingSpec, draw_rng, iter_clusters
from .sequences import BlockKind, ProtocolParams, Schedule, compile_protocol

CLUSTER_STREAM = 0
DISORDER_STREAM = 1


class DegenerateTraceError(ValueError):
    """The trace carries no information to fit (all zero or too short)."""


@dataclass(frozen=True)
class AerisParams:
    delta: float = CHEMICAL_SHIFT_HZ  # Hz
    tau: float = MEASUREMENT_INTERVAL  # s
    n_sr: int = N_MEASUREMENTS

    def __post_init__(self):
        if self.n_sr < 4:
            raise ValueError("n_sr must be at least 4")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def amplitudes(self, b_t: float) -> np.ndarray:
        """Target-field amplitude (T) of each measurement."""
        return b_t * np.cos(TWO_PI * self.delta * self.tau * np.arange(self.n_sr))


@dataclass(frozen=True)
class EnsembleTrace:
    """Averaged per-NV trace and the per-cluster rows it came from.

    ``per_cluster[c]`` is ``(1/q_c) <sum sigma^z>_c``; ``values`` is its
    column mean.
    """

    values: np.ndarray
    Q_used: int
    per_cluster: Optional[np.ndarray] = field(default=None, repr=False)
    sizes: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FitResult:
    delta_hat: float  # Hz
    amplitude_hat: float
    phase_hat: float
    offset_hat: float
    rms_residual: float


@dataclass(frozen=True)
class SweepRow:
    ppm: float
    protocol: str
    amplitude: float
    amp_stderr: float
    N: float
    snr: float
    Q: int


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)

    def get(self, protocol: str, ppm: float) -> SweepRow:
        for row in self.rows:
            if row.protocol == protocol and np.isclose(row.ppm, ppm):
                return row
        raise KeyError((protocol, ppm))


# ---------------------------------------------------------------------------
# single cluster


def _schedule(protocol: Union[ProtocolParams, Schedule]) -> Schedule:
    return protocol if isinstance(protocol, Schedule) else compile_protocol(protocol)


def aeris_trace(protocol: Union[ProtocolParams, Schedule], cluster: Cluster,
                noise: NoiseSpec = NoiseSpec(), aeris: AerisParams = AerisParams(),
                rng: Optional[np.random.Generator] = None,
                signal: SignalSpec = SignalSpec(), refine: int = 1) -> np.ndarray:
    """Readout ``<sum_i sigma_i^z>`` for each of the ``n_sr`` measurements.

    Disorder is drawn once per cluster or once per measurement according to
    ``noise.disorder_resample``. ``signal.amplitude`` is ``B_t``.
    """
    schedule = _schedule(protocol)
    if aeris.tau <= schedule.total_duration:
        raise ValueError(f"tau={aeris.tau:g} s is shorter than one measurement "
                         f"({schedule.total_duration:.3g} s)")
    rng = np.random.default_rng() if rng is None else rng
    q = cluster.q
    if noise.disorder_resample == "per_measurement":
        xi = noise.draw(rng, q, aeris.n_sr)
    else:
        xi = np.repeat(noise.draw(rng, q)[:, None], aeris.n_sr, axis=1)
    amps = aeris.amplitudes(signal.amplitude)
    per_site = run_batch(cluster, schedule, xi, amps, signal, noise.rabi_error, refine)
    return per_site.sum(axis=0)


# ---------------------------------------------------------------------------
# fitting


def _design(delta: float, tau: float, n: int) -> np.ndarray:
    arg = TWO_PI * delta * tau * np.arange(n)
    return np.column_stack([np.cos(arg), -np.sin(arg), np.ones(n)])


def fit_chemical_shift(trace, tau: float, delta_range=None, grid_step: Optional[float] = None,
                       offset: bool = True) -> FitResult:
    """Fit ``A cos(2 pi delta tau k + phase) + c`` to ``trace``.

    A grid over ``delta`` (linear least squares for ``A``, ``phase`` and
    ``c`` at each node) picks the starting point, then all parameters are
    refined together with ``scipy.optimize.least_squares``.

    Parameters
    ----------
    trace : (n,) array
    tau : float
        Measurement spacing in seconds.
    delta_range : (lo, hi), optional
        Search interval in Hz; defaults to ``(0, 1 / (2 tau))``.
    offset : bool
        Include the constant ``c``. Disable only for offset-free data.
    """
    y = np.asarray(getattr(trace, "values", trace), dtype=float)
    n = len(y)
    if n < 8:
        raise DegenerateTraceError("need at least 8 samples to fit")
    if not np.any(y):
        raise DegenerateTraceError("trace is identically zero")
    lo, hi = delta_range if delta_range is not None else (0.0, 0.5 / tau)
    step = grid_step or 1.0 / (8.0 * n * tau)
    cols = slice(None) if offset else slice(0, 2)

    best = None
    for delta in np.arange(lo, hi + step / 2, step):
        X = _design(delta, tau, n)[:, cols]
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        res = float(np.sum((y - X @ coef) ** 2))
        if best is None or res < best[0]:
            best = (res, delta, coef)
    _, delta0, coef = best

    def residual(p):
        return _design(p[0], tau, n)[:, cols] @ p[1:] - y

    p0 = np.concatenate([[delta0], coef])
    sol = least_squares(residual, p0, x_scale=np.concatenate([[step], np.abs(coef) + 1e-12]),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    delta_hat, a, b = sol.x[:3]
    c = sol.x[3] if offset else 0.0
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return FitResult(delta_hat=float(abs(delta_hat)), amplitude_hat=float(np.hypot(a, b)),
                     phase_hat=float(np.arctan2(b, a)), offset_hat=float(c), rms_residual=rms)


def project_amplitude(rows: np.ndarray, delta: float, tau: float, phase: float) -> np.ndarray:
    """Amplitude of each row along ``cos(2 pi delta tau k + phase)``, offset removed."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    X = _design(delta, tau, rows.shape[1])
    coef, *_ = np.linalg.lstsq(X, rows.T, rcond=None)
    return coef[0] * np.cos(phase) + coef[1] * np.sin(phase)


# ---------------------------------------------------------------------------
# ensembles


def _normalised_trace(args):
    protocol, cluster, noise, aeris, signal, rng, refine = args
    return aeris_trace(protocol, cluster, noise, aeris, rng, signal, refine) / cluster.q


def run_clusters(protocol, clusters: Sequence[Cluster], seed: int, noise: NoiseSpec = NoiseSpec(),
                 aeris: AerisParams = AerisParams(), signal: SignalSpec = SignalSpec(),
                 workers: int = 1, refine: int = 1) -> np.ndarray:
    """Per-NV AERIS traces of ``clusters`` as a ``(Q, n_sr)`` array.

    Cluster ``c`` draws its disorder from ``draw_rng(seed, c, DISORDER_STREAM)``.
    """
    schedule = _schedule(protocol)
    jobs = [(schedule, cl, noise, aeris, signal, draw_rng(seed, c, DISORDER_STREAM), refine)
            for c, cl in enumerate(clusters)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_normalised_trace, jobs))
    else:
        rows = [_normalised_trace(job) for job in jobs]
    return np.array(rows).reshape(len(jobs), aeris.n_sr)


def draw_clusters(spec: SamplingSpec, Q: int, lattice: LatticeConfig = LatticeConfig(),
                  max_rejections: int = 100_000) -> List[Cluster]:
    """First ``Q`` accepted clusters of ``spec`` in draw order."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if spec.count_max > MAX_ENGINE_SPINS:
        raise ValueError(f"count_max={spec.count_max} exceeds engine limit {MAX_ENGINE_SPINS}")
    clusters = []
    for cluster in iter_clusters(spec, lattice, max_rejections):
        clusters.append(cluster)
        if len(clusters) == Q:
            break
    return clusters


def ensemble_average(protocol, ppm: float, Q: int, spec: Optional[SamplingSpec] = None,
                     noise: NoiseSpec = NoiseSpec(), aeris: AerisParams = AerisParams(),
                     seed: int = 0, signal: SignalSpec = SignalSpec(),
                     lattice: LatticeConfig = LatticeConfig(), workers: int = 1,
                     refine: int = 1) -> EnsembleTrace:
    """Average per-NV AERIS traces over the first ``Q`` accepted clusters at ``ppm``.

    ``spec`` supplies the sampling shape (its ``ppm`` is replaced); the
    cluster draws use ``seed``.
    """
    spec = replace(spec or SamplingSpec(ppm=ppm), ppm=ppm, rng_seed=seed)
    clusters = draw_clusters(spec, Q, lattice)
    rows = run_clusters(protocol, clusters, seed, noise, aeris, signal, workers, refine)
    return EnsembleTrace(values=rows.mean(axis=0), Q_used=len(clusters), per_cluster=rows,
                         sizes=np.array([c.q for c in clusters]))


def trace_amplitude(trace, aeris: AerisParams = AerisParams()) -> float:
    """Fitted oscillation amplitude of an (ensemble) trace."""
    return fit_chemical_shift(trace, aeris.tau).amplitude_hat


def _amplitude_and_stderr(trace: EnsembleTrace, aeris: AerisParams):
    fit = fit_chemical_shift(trace, aeris.tau)
    if trace.per_cluster is None or trace.Q_used < 2:
        return fit.amplitude_hat, float("nan")
    proj = project_amplitude(trace.per_cluster, fit.delta_hat, aeris.tau, fit.phase_hat)
    return fit.amplitude_hat, float(proj.std(ddof=1) / np.sqrt(len(proj)))


def sensor_count(ppm: float, lattice: LatticeConfig = LatticeConfig(),
                 v_act: float = ACTIVE_VOLUME) -> float:
    """Number of NVs in the active volume."""
    if not ppm > 0:
        raise ValueError("ppm must be positive")
    return lattice.number_density(ppm) * v_act


def snr(amplitude: float, ppm: float, lattice: LatticeConfig = LatticeConfig(),
        v_act: float = ACTIVE_VOLUME) -> float:
    """Projection-noise limited SNR ``amplitude * sqrt(N)``."""
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    return amplitude * np.sqrt(sensor_count(ppm, lattice, v_act))


def _protocol_name(protocol) -> str:
    return _schedule(protocol).kind.value


def sweep(protocols: Sequence[ProtocolParams], ppm_list: Iterable[float],
          Q: Union[int, Dict[str, int]], spec: Optional[SamplingSpec] = None,
          noise: NoiseSpec = NoiseSpec(), aeris: AerisParams = AerisParams(), seed: int = 0,
          signal: SignalSpec = SignalSpec(), lattice: LatticeConfig = LatticeConfig(),
          v_act: float = ACTIVE_VOLUME, workers: int = 1) -> SweepResult:
    """Amplitude and SNR table over protocols and concentrations.

    ``Q`` may be a mapping from protocol name (``'cpmg'``, ``'shield-aabb'``,
    ...) to cluster count. All protocols at a given ppm see the same clusters.
    """
    protocols = list(protocols)
    ppm_list = list(ppm_list)
    if not protocols or not ppm_list:
        raise ValueError("protocols and ppm_list must be non-empty")
    result = SweepResult()
    for ppm in ppm_list:
        for protocol in protocols:
            name = _protocol_name(protocol)
            q_count = Q[name] if isinstance(Q, dict) else Q
            trace = ensemble_average(protocol, ppm, q_count, spec, noise, aeris, seed, signal,
                                     lattice, workers)
            amp, err = _amplitude_and_stderr(trace, aeris)
            n = sensor_count(ppm, lattice, v_act)
            result.rows.append(SweepRow(ppm=ppm, protocol=name, amplitude=amp, amp_stderr=err,
                                        N=n, snr=amp * np.sqrt(n), Q=trace.Q_used))
    return result


def convergence_curve(protocol, ppm: float, Q_max: int, spec: Optional[SamplingSpec] = None,
                      noise: NoiseSpec = NoiseSpec(), aeris: AerisParams = AerisParams(),
                      seed: int = 0, signal: SignalSpec = SignalSpec(), workers: int = 1,
                      trace: Optional[EnsembleTrace] = None) -> List[dict]:
    """Relative amplitude error of the first-``Q`` average against the ``Q_max`` average.

    Amplitudes of prefixes are projections onto the waveform fitted to the
    full ensemble. Pass ``trace`` to reuse an existing ensemble.
    """
    if Q_max < 10:
        raise ValueError("Q_max must be at least 10")
    if trace is None:
        trace = ensemble_average(protocol, ppm, Q_max, spec, noise, aeris, seed, signal,
                                 workers=workers)
    rows = trace.per_cluster[:Q_max]
    fit = fit_chemical_shift(rows.mean(axis=0), aeris.tau)
    proj = project_amplitude(rows, fit.delta_hat, aeris.tau, fit.phase_hat)
    running = np.cumsum(proj) / np.arange(1, len(proj) + 1)
    final = running[-1]
    return [{"Q": k + 1, "amplitude": float(running[k]),
             "error": float(abs(running[k] - final) / abs(final))} for k in range(len(proj))]


def large_cluster_mode(protocols: Sequence[ProtocolParams], ppm: float = 1.0, Q: Union[int, dict] = 20,
                       sphere_mean: int = 6, count_max: int = 8, seed: int = 0,
                       noise: NoiseSpec = NoiseSpec(), aeris: AerisParams = AerisParams(),
                       signal: SignalSpec = SignalSpec(), workers: int = 1) -> Dict[str, tuple]:
    """Compare the default 2-6 NV sampling with an enlarged sphere (2-8 NVs).

    Returns ``{protocol: (small_row, large_row)}``.
    """
    small = sweep(protocols, [ppm], Q, SamplingSpec(ppm=ppm), noise, aeris, seed, signal,
                  workers=workers)
    large_spec = SamplingSpec(ppm=ppm, sphere_mean=sphere_mean, count_max=count_max)
    large = sweep(protocols, [ppm], Q, large_spec, noise, aeris, seed, signal, workers=workers)
    return {a.protocol: (a, b) for a, b in zip(small.rows, large.rows)}


# ---------------------------------------------------------------------------
# output


def write_trace_csv(path, trace, aeris: AerisParams = AerisParams()) -> None:
    values = np.asarray(getattr(trace, "values", trace), dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "t_s_offset", "sigma_z_bar"])
        for k, v in enumerate(values):
            writer.writerow([k, repr(k * aeris.tau), repr(float(v))])


def read_trace_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return np.array([float(row["sigma_z_bar"]) for row in reader])


def write_sweep_csv(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ppm", "protocol", "amplitude", "amp_stderr", "N", "snr", "Q"])
        for r in result.rows:
            writer.writerow([repr(r.ppm), r.protocol, repr(r.amplitude), repr(r.amp_stderr),
                             repr(r.N), repr(r.snr), r.Q])


def write_convergence_csv(path, curve: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["Q", "amplitude", "error"])
        for row in curve:
            writer.writerow([row["Q"], repr(row["amplitude"]), repr(row["error"])])


def write_manifest(path, **entries) -> None:
    """JSON manifest; dataclasses and enums are converted to plain values."""

    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return plain(asdict(obj))
        if isinstance(obj, dict):
            return {str(k): plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
            return obj.value
        return obj

    with open(path, "w") as fh:
        json.dump(plain(entries), fh, indent=2, sort_keys=True)
        fh.write("\n")
