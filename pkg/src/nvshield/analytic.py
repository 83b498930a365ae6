"""Closed-form small-signal predictions used as oracles for the engine.

All expressions are in Pauli normalization: a single NV prepared along x
and read out along z gives ``<sigma^z>``. Times are seconds, fields Tesla,
couplings rad/s.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import GAMMA_E, THETA_MAGIC
from .sequences import BlockKind, axis_geometry

# above this accumulated phase the small-angle expressions are off by > ~0.2 %
SMALL_ANGLE_LIMIT = 0.1


class RegimeWarning(UserWarning):
    """Inputs lie outside the small-angle regime of the closed forms."""


@dataclass(frozen=True)
class AnalyticPrediction:
    amplitude: float
    factor: float = 1.0

    def __post_init__(self):
        if abs(self.factor) > 1.0 + 1e-12:
            raise ValueError("attenuation factor must satisfy |factor| <= 1")


def _check_regime(b_t: float, t_s: float, gamma_e: float) -> None:
    phase = abs(gamma_e * b_t * t_s)
    if phase > SMALL_ANGLE_LIMIT:
        warnings.warn(f"gamma_e*B*t_s = {phase:.3g} is not small; closed form is inaccurate",
                      RegimeWarning, stacklevel=3)


def cpmg_response(b_t: float, t_s: float, phi_t: float = 0.0, q: int = 1,
                  gamma_e: float = GAMMA_E) -> float:
    """Readout ``<sum sigma^z>`` after CPMG for an uncoupled cluster of ``q`` NVs.

    ``(2 gamma_e B t_s / pi) cos(phi_t) q``.
    """
    _check_regime(b_t, t_s, gamma_e)
    return 2.0 * gamma_e * b_t * abs(t_s) / np.pi * np.cos(phi_t) * q


def shield_response(b_t: float, t_s: float, phi_t: float = 0.0, q: int = 1,
                    kind: BlockKind = BlockKind.SHIELD_AABB, gamma_e: float = GAMMA_E) -> float:
    """CPMG response scaled by the reduction factor of the SHIELD variant."""
    return cpmg_response(b_t, t_s, phi_t, q, gamma_e) * axis_geometry(kind).f_r


def two_nv_cpmg_factor(d12: float, t_s: float) -> float:
    """Attenuation ``cos(3 d12 t_s / 4)`` of the CPMG signal of a coupled pair."""
    return float(np.cos(0.75 * d12 * t_s))


def effective_rotation_angle(b_t: float, t_s: float, phi_t: float = 0.0,
                             kind: BlockKind = BlockKind.SHIELD_AABB,
                             gamma_e: float = GAMMA_E) -> float:
    """Angle of the net rotation about ``C`` accumulated over a SHIELD run.

    The readout is ``2 theta_eff`` per NV in the small-angle limit.
    """
    return gamma_e * b_t * abs(t_s) * axis_geometry(kind).f_r / np.pi * np.cos(phi_t)


def fr_formula(theta_m: float = THETA_MAGIC, phi_a: float = np.radians(35.0)) -> float:
    """``sqrt(cos^2 theta + sin^2 theta sin^2 phi_A) cos theta``."""
    if not 0.0 < theta_m < np.pi / 2:
        raise ValueError("theta_m must lie in (0, pi/2)")
    return float(np.sqrt(np.cos(theta_m) ** 2 + np.sin(theta_m) ** 2 * np.sin(phi_a) ** 2)
                 * np.cos(theta_m))


def predict(kind: BlockKind, b_t: float, t_s: float, q: int = 1, phi_t: float = 0.0,
            d12: float = 0.0) -> AnalyticPrediction:
    """Amplitude per cluster and, for CPMG pairs, the dipolar attenuation factor."""
    if kind is BlockKind.CPMG:
        factor = two_nv_cpmg_factor(d12, t_s) if q == 2 else 1.0
        return AnalyticPrediction(cpmg_response(b_t, t_s, phi_t, q) * factor, factor)
    return AnalyticPrediction(shield_response(b_t, t_s, phi_t, q, kind), 1.0)
