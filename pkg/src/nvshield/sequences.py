"""CPMG and SHIELD pulse sequences compiled to piecewise-constant schedules.

A :class:`Schedule` is an ordered list of :class:`PulseSegment` objects in
the rotating frame. Each segment holds the drive amplitude, phase and detuning
(all rad/s or rad) for a stretch of time. Instantaneous pulses are segments
of zero duration carrying an explicit rotation ``angle``.

The SHIELD sequence is

    (pi/2)_y  [ (U_c)^m  pi_x  (U_c)^m  pi_x ]^M  (beta)_x

where each MW block ``U_c`` is four back-to-back 2pi rotations about
magic-angle axes (A, -A, -B, B or A, -A, A, -A).
"""

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .constants import BLOCKS_PER_HALF_PERIOD, RABI_HZ, SEQUENCE_REPEATS, THETA_MAGIC, TWO_PI


class BlockKind(enum.Enum):
    CPMG = "cpmg"
    SHIELD_AABB = "shield-aabb"
    SHIELD_AAAA = "shield-aaaa"

    @property
    def is_shield(self) -> bool:
        return self is not BlockKind.CPMG


class PulseModel(enum.Enum):
    FINITE = "finite"
    INSTANTANEOUS = "instantaneous"


@dataclass(frozen=True)
class PulseSegment:
    """Constant control over ``duration`` seconds.

    ``omega`` (rad/s) is the Rabi amplitude, ``phase`` the drive phase and
    ``detuning`` (rad/s) the offset of the drive from resonance. Free
    evolution has ``omega == 0``. A zero-duration segment is an ideal
    rotation by ``angle`` about the in-plane axis set by ``phase``.
    ``f_sign`` is the modulation-function sign during the segment.
    """

    duration: float
    omega: float = 0.0
    phase: float = 0.0
    detuning: float = 0.0
    f_sign: int = 1
    angle: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")
        if self.duration == 0 and self.angle is None:
            raise ValueError("zero-duration segment needs an explicit rotation angle")
        if self.f_sign not in (1, -1):
            raise ValueError("f_sign must be +1 or -1")

    @property
    def is_ideal(self) -> bool:
        return self.duration == 0


@dataclass(frozen=True)
class Schedule:
    """Compiled sequence.

    ``window`` is the sensing interval ``(start, end)`` between the
    preparation and readout pulses; its length is the sensing time ``t_s``.
    ``signal_origin`` is the time at which a cosine signal is in phase with
    the fundamental of the modulation function.
    """

    segments: Tuple[PulseSegment, ...]
    kind: BlockKind
    first_harmonic: float  # Hz
    signal_origin: float
    window: Tuple[float, float]
    readout_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    pulse_model: PulseModel = PulseModel.FINITE

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def sensing_time(self) -> float:
        return self.window[1] - self.window[0]

    @property
    def period(self) -> float:
        return 1.0 / self.first_harmonic

    def start_times(self) -> np.ndarray:
        durations = np.array([s.duration for s in self.segments])
        return np.concatenate([[0.0], np.cumsum(durations)[:-1]])

    def without_readout(self) -> "Schedule":
        """Same schedule minus the final readout pulse."""
        return Schedule(self.segments[:-1], self.kind, self.first_harmonic, self.signal_origin,
                        self.window, self.readout_axis, self.pulse_model)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_start_s", "duration_s", "omega_hz", "phase_rad", "detuning_hz",
                         "f_sign", "angle_rad"])
        for t0, seg in zip(self.start_times(), self.segments):
            writer.writerow([repr(float(t0)), repr(seg.duration), repr(seg.omega / TWO_PI),
                             repr(seg.phase), repr(seg.detuning / TWO_PI), seg.f_sign,
                             "" if seg.angle is None else repr(seg.angle)])
        return buf.getvalue()


@dataclass(frozen=True)
class AxisGeometry:
    phi_A: float
    phi_B: float
    alpha: float
    theta_magic: float
    C: np.ndarray = field(repr=False)
    C_perp: np.ndarray = field(repr=False)
    beta: float
    f_r: float

    @property
    def A(self) -> np.ndarray:
        return _tilted_axis(self.theta_magic, self.phi_A)

    @property
    def B(self) -> np.ndarray:
        return _tilted_axis(self.theta_magic, self.phi_B)


@dataclass(frozen=True)
class ProtocolParams:
    kind: BlockKind
    omega: float = TWO_PI * RABI_HZ
    m: int = BLOCKS_PER_HALF_PERIOD
    M: int = SEQUENCE_REPEATS
    pulse_model: PulseModel = PulseModel.FINITE

    def __post_init__(self):
        if self.m < 1 or self.M < 1:
            raise ValueError("m and M must be at least 1")
        if not self.omega > 0:
            raise ValueError("omega must be positive")


def _tilted_axis(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def lg_detuning(omega: float) -> float:
    """Lee-Goldburg detuning ``omega / sqrt(2)``; tilts the effective field to the magic angle."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return omega / np.sqrt(2.0)


def effective_amplitude(omega: float) -> float:
    """``sqrt(omega^2 + Delta^2)`` at the LG condition, i.e. ``sqrt(3/2) omega``."""
    return float(np.hypot(omega, lg_detuning(omega)))


def shield_harmonic(omega: float, m: int) -> float:
    """Modulation frequency (Hz) of SHIELD with instantaneous pi pulses: ``gamma / (8 m)`` in Hz."""
    return effective_amplitude(omega) / TWO_PI / (8 * m)


def axis_geometry(kind: BlockKind) -> AxisGeometry:
    """Rotation axes, effective axis ``C`` and reduction factor of a SHIELD block."""
    if kind is BlockKind.SHIELD_AABB:
        alpha = np.deg2rad(55.0)
        phi_A = np.pi / 2 - alpha
        phi_B = phi_A + 2 * alpha
    elif kind is BlockKind.SHIELD_AAAA:
        alpha = 0.0
        phi_A = phi_B = np.pi / 2
    else:
        raise ValueError(f"{kind} has no Lee-Goldburg block geometry")

    theta = THETA_MAGIC
    cy = np.sin(theta) * np.sin(phi_A)
    cz = np.cos(theta)
    norm = np.hypot(cy, cz)
    C = np.array([0.0, cy, cz]) / norm
    C_perp = np.cross(C, [1.0, 0.0, 0.0])
    C_perp /= np.linalg.norm(C_perp)
    beta = np.pi / 2 + np.arctan2(cy, cz)
    return AxisGeometry(phi_A=float(phi_A), phi_B=float(phi_B), alpha=float(alpha),
                        theta_magic=theta, C=C, C_perp=C_perp, beta=float(beta),
                        f_r=float(norm * np.cos(theta)))


def _pulse(omega: float, angle: float, phase: float, model: PulseModel, f_sign: int,
           label: str) -> PulseSegment:
    if model is PulseModel.INSTANTANEOUS:
        return PulseSegment(0.0, omega, phase, 0.0, f_sign, angle=angle, label=label)
    return PulseSegment(angle / omega, omega, phase, 0.0, f_sign, label=label)


def _block(kind: BlockKind, omega: float, f_sign: int) -> Sequence[PulseSegment]:
    geo = axis_geometry(kind)
    delta = lg_detuning(omega)
    t_2pi = TWO_PI / effective_amplitude(omega)
    # (phase, detuning) pairs: A, -A, then -B, B (AABB) or A, -A (AAAA)
    if kind is BlockKind.SHIELD_AABB:
        axes = [(geo.phi_A, delta, "A"), (geo.phi_A + np.pi, -delta, "Abar"),
                (geo.phi_B + np.pi, -delta, "Bbar"), (geo.phi_B, delta, "B")]
    else:
        axes = [(geo.phi_A, delta, "A"), (geo.phi_A + np.pi, -delta, "Abar")] * 2
    return [PulseSegment(t_2pi, omega, float(np.mod(ph, TWO_PI)), det, f_sign, label=lab)
            for ph, det, lab in axes]


def compile_shield(params: ProtocolParams) -> Schedule:
    """Compile a SHIELD sequence.

    Time order: preparation ``(pi/2)_y``, then ``M`` repetitions of
    ``m`` blocks, ``pi_x``, ``m`` blocks, ``pi_x``, then the ``beta_x``
    pulse that maps ``C_perp`` onto z.
    """
    if not params.kind.is_shield:
        raise ValueError("compile_shield needs a SHIELD block kind")
    omega, m, model = params.omega, params.m, params.pulse_model
    geo = axis_geometry(params.kind)

    segments = [_pulse(omega, np.pi / 2, np.pi / 2, model, 1, "prep")]
    plus = _block(params.kind, omega, 1)
    minus = _block(params.kind, omega, -1)
    for _ in range(params.M):
        segments += plus * m
        segments.append(_pulse(omega, np.pi, 0.0, model, 1, "pi"))
        segments += minus * m
        segments.append(_pulse(omega, np.pi, 0.0, model, -1, "pi"))
    segments.append(_pulse(omega, geo.beta, 0.0, model, 1, "readout"))

    t_c = sum(s.duration for s in plus)
    t_pi = segments[m * 4 + 1].duration
    period = 2 * (m * t_c + t_pi)
    start = segments[0].duration
    return Schedule(tuple(segments), params.kind, first_harmonic=1.0 / period,
                    signal_origin=start + m * t_c / 2,
                    window=(start, start + params.M * period), pulse_model=model)


def compile_cpmg(params: ProtocolParams, target_freq: Optional[float] = None) -> Schedule:
    """Compile ``(pi/2)_y - [pi_x]^(2M) - (pi/2)_x`` locked to ``target_freq`` (Hz).

    Pulses are centred at odd multiples of ``T/4`` (``T = 1/target_freq``)
    so the sequence covers ``M`` periods. ``target_freq`` defaults to the
    SHIELD modulation frequency for the same ``omega`` and ``m``.
    """
    if target_freq is None:
        target_freq = shield_harmonic(params.omega, params.m)
    if not target_freq > 0:
        raise ValueError("target frequency must be positive")
    omega, model = params.omega, params.pulse_model
    period = 1.0 / target_freq
    t_pi = 0.0 if model is PulseModel.INSTANTANEOUS else np.pi / omega
    if t_pi >= period / 2:
        raise ValueError(f"pi pulses of {t_pi:.3e} s overlap at {target_freq:.4g} Hz")

    prep = _pulse(omega, np.pi / 2, np.pi / 2, model, 1, "prep")
    segments = [prep]
    n_pulses = 2 * params.M
    centres = (2 * np.arange(n_pulses) + 1) * period / 4
    last = 0.0
    sign = 1
    for c in centres:
        gap = c - t_pi / 2 - last
        if gap > 0:
            segments.append(PulseSegment(gap, f_sign=sign, label="free"))
        segments.append(_pulse(omega, np.pi, 0.0, model, sign, "pi"))
        last = c + t_pi / 2
        sign = -sign
    tail = params.M * period - last
    if tail > 0:
        segments.append(PulseSegment(tail, f_sign=sign, label="free"))
    segments.append(_pulse(omega, np.pi / 2, 0.0, model, 1, "readout"))

    start = prep.duration
    return Schedule(tuple(segments), BlockKind.CPMG, first_harmonic=target_freq,
                    signal_origin=start, window=(start, start + params.M * period),
                    pulse_model=model)


def compile_protocol(params: ProtocolParams, target_freq: Optional[float] = None) -> Schedule:
    if params.kind is BlockKind.CPMG:
        return compile_cpmg(params, target_freq)
    return compile_shield(params)


def modulation_function(schedule: Schedule) -> Callable[[np.ndarray], np.ndarray]:
    """Toggling-frame sign ``F(t)`` of the compiled schedule.

    ``F`` is ``f_sign`` on drive-free and MW-block segments, follows
    ``cos`` of the accumulated rotation across a finite pi pulse, and is
    zero outside the sensing window.
    """
    starts = schedule.start_times()
    ends = starts + np.array([s.duration for s in schedule.segments])
    lo, hi = schedule.window
    segs = schedule.segments

    def F(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        inside = (t >= lo) & (t < hi)
        idx = np.searchsorted(ends, t, side="right")
        for k in np.unique(idx[inside]):
            seg = segs[k]
            sel = inside & (idx == k)
            if seg.label == "pi":
                frac = (t[sel] - starts[k]) / seg.duration
                out[sel] = seg.f_sign * np.cos(np.pi * frac)
            else:
                out[sel] = seg.f_sign
        return out

    return F


def fundamental_coefficient(schedule: Schedule, samples_per_period: int = 20000) -> float:
    """Cosine Fourier coefficient of ``F`` at ``first_harmonic`` over the sensing window."""
    lo, hi = schedule.window
    n = int(round((hi - lo) / schedule.period * samples_per_period))
    t = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    F = modulation_function(schedule)(t)
    phase = TWO_PI * schedule.first_harmonic * (t - schedule.signal_origin)
    return float(2.0 * np.mean(F * np.cos(phase)))
