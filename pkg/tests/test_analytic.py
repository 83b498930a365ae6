import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvshield import analytic
from nvshield.analytic import (AnalyticPrediction, RegimeWarning, cpmg_response,
                               effective_rotation_angle, fr_formula, predict, shield_response,
                               two_nv_cpmg_factor)
from nvshield.constants import THETA_MAGIC, TWO_PI
from nvshield.sequences import BlockKind

AABB, AAAA = BlockKind.SHIELD_AABB, BlockKind.SHIELD_AAAA
T_S = 21e-6


def test_cpmg_response_examples():
    assert cpmg_response(1e-9, T_S) == pytest.approx(2.35e-3, rel=2e-3)
    assert cpmg_response(1e-9, T_S, phi_t=np.pi / 2) == pytest.approx(0.0, abs=1e-18)
    assert cpmg_response(1e-9, T_S, q=4) == pytest.approx(4 * cpmg_response(1e-9, T_S))


def test_shield_response_examples():
    assert shield_response(1e-9, T_S) == pytest.approx(1.01e-3, rel=3e-3)
    ratio = shield_response(1e-9, T_S, kind=AAAA) / shield_response(1e-9, T_S, kind=AABB)
    assert ratio == pytest.approx(1.345, abs=1e-3)
    assert shield_response(0.0, T_S) == 0.0


def test_two_nv_factor_examples():
    assert two_nv_cpmg_factor(0.0, T_S) == 1.0
    assert two_nv_cpmg_factor(TWO_PI * 0.5e6, T_S) == pytest.approx(0.707, abs=1e-3)
    d_inv = 4 * np.pi / (3 * T_S)
    assert two_nv_cpmg_factor(d_inv, T_S) == pytest.approx(-1.0)


@given(st.floats(-1e10, 1e10), st.floats(0, 1e-3))
def test_two_nv_factor_bounded(d12, t_s):
    assert abs(two_nv_cpmg_factor(d12, t_s)) <= 1.0


def test_effective_rotation_angle():
    theta = effective_rotation_angle(1e-9, T_S)
    assert theta == pytest.approx(5.05e-4, rel=2e-3)
    for q in (1, 3):
        assert 2 * theta * q == pytest.approx(shield_response(1e-9, T_S, q=q), rel=1e-12)
    assert effective_rotation_angle(1e-9, T_S, np.pi) == pytest.approx(-theta)


def test_fr_formula_examples():
    assert fr_formula(THETA_MAGIC, np.radians(35)) == pytest.approx(0.4292, abs=5e-4)
    assert fr_formula(THETA_MAGIC, np.radians(90)) == pytest.approx(1 / np.sqrt(3))
    assert fr_formula(THETA_MAGIC, 0.0) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        fr_formula(0.0, 0.1)


def test_regime_warning():
    with pytest.warns(RegimeWarning):
        cpmg_response(1e-5, T_S)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cpmg_response(1e-9, T_S)


def test_prediction_record():
    p = predict(BlockKind.CPMG, 1e-9, T_S, q=2, d12=TWO_PI * 0.5e6)
    assert p.factor == pytest.approx(two_nv_cpmg_factor(TWO_PI * 0.5e6, T_S))
    assert p.amplitude == pytest.approx(cpmg_response(1e-9, T_S, q=2) * p.factor)
    assert predict(AABB, 1e-9, T_S).amplitude == pytest.approx(shield_response(1e-9, T_S))
    with pytest.raises(ValueError):
        AnalyticPrediction(1.0, factor=1.5)
