"""Randomised identities that must hold for every admissible parameter set."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlbe.brownian import GaussianState1D, coefficients, evolve_moments, thermal_spreads
from qlbe.kinetics import trajectory_seed
from qlbe.physcore import GasSpec, GaussianPotential, UnitSystem, potential_ft
from qlbe.structure_factor import (
    MBExact, MBLimit, bose_occupation, detailed_balance_residual, energy_transfer,
    response_function,
)

positive = st.floats(0.1, 10.0)
magnitude = st.floats(0.05, 20.0)
energy = st.floats(-20.0, 20.0).filter(lambda e: abs(e) > 1e-6)
vec = st.tuples(*[st.floats(-10.0, 10.0)] * 3)

FAST = settings(max_examples=200, deadline=None)


@FAST
@given(m=positive, beta=positive, q=magnitude, E=energy, exact=st.booleans())
def test_detailed_balance_everywhere(m, beta, q, E, exact):
    S = (MBExact if exact else MBLimit)(GasSpec(m, beta, 1.0))
    r = float(detailed_balance_residual(S, np.array([0.0, q, 0.0]), E))
    # the only error source is rounding in log S, proportional to its size
    scale = abs(float(S.log_value(q, E))) + abs(beta * E) + 1.0
    assert abs(r) <= 8e-16 * scale


@FAST
@given(m=positive, beta=positive, q=magnitude, E=energy)
def test_limit_over_exact_ratio(m, beta, q, E):
    gas = GasSpec(m, beta, 1.0)
    diff = float(MBLimit(gas).log_value(q, E) - MBExact(gas).log_value(q, E))
    expected = beta * m * E * E / (2 * q * q)
    assert diff == pytest.approx(expected, rel=1e-9, abs=1e-12)


@FAST
@given(m=positive, beta=positive, q=magnitude, E=st.floats(0.01, 3.0))
def test_response_is_odd(m, beta, q, E):
    S = MBExact(GasSpec(m, beta, 1.0))
    if float(S.log_value(q, E)) < -600:
        return
    a = float(response_function(S, q, E))
    b = float(response_function(S, q, -E))
    assert b == pytest.approx(-a, rel=1e-10)
    assert a < 0


@FAST
@given(q=vec, p=vec, M=positive)
def test_energy_transfer_reverses(q, p, M):
    q, p = np.array(q), np.array(p)
    fwd = energy_transfer(q, p, M)
    back = energy_transfer(-q, p + q, M)
    assert fwd + back == pytest.approx(0.0, abs=1e-12 * (1 + np.dot(p + q, p + q) + np.dot(p, p)))
    assert fwd == pytest.approx((2 * np.dot(q, p) + np.dot(q, q)) / (2 * M), abs=1e-11)


@FAST
@given(eta=st.floats(0.0, 50.0), M=st.floats(0.01, 1e4), beta=positive, hbar=positive)
def test_minimal_invasiveness_identities(eta, M, beta, hbar):
    u = UnitSystem(hbar)
    c = coefficients(eta, M, beta, u)
    assert c.D_pp * c.D_xx == pytest.approx((hbar * eta / 4) ** 2, rel=1e-15, abs=0)
    s = thermal_spreads(M, beta, u)
    assert s.dp_th * s.dx_th == pytest.approx(hbar / 2, rel=3e-16)


@FAST
@given(vx=st.floats(0.3, 5.0), vp=st.floats(0.3, 5.0), corr=st.floats(-0.9, 0.9),
       eta=st.floats(0.0, 5.0), t=st.floats(0.0, 10.0), M=st.floats(0.5, 5.0))
def test_moment_flow_respects_uncertainty(vx, vp, corr, eta, t, M):
    cxp = corr * math.sqrt(vx * vp)
    s0 = GaussianState1D(0.0, 1.0, vx, vp, cxp)
    if s0.uncertainty_product() < 0.25:
        return
    c = coefficients(eta, M, 1.0)
    s = evolve_moments(s0, c, t)
    assert s.uncertainty_product() >= 0.25 * (1 - 1e-9)


@FAST
@given(t1=st.floats(0.0, 3.0), t2=st.floats(0.0, 3.0), eta=st.floats(0.0, 3.0))
def test_moment_flow_is_a_semigroup(t1, t2, eta):
    c = coefficients(eta, 1.5, 1.0)
    s0 = GaussianState1D(0.3, -1.0, 2.0, 1.0, 0.2)
    a = evolve_moments(evolve_moments(s0, c, t1), c, t2)
    b = evolve_moments(s0, c, t1 + t2)
    for f in ("mean_x", "mean_p", "var_x", "var_p", "cov_xp"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-9, abs=1e-9)


@FAST
@given(x=st.floats(1e-6, 700.0), beta=positive)
def test_bose_occupation_reflection(x, beta):
    e = x / beta
    up, down = bose_occupation(beta, e), bose_occupation(beta, -e)
    # near x = 0 both terms are ~1/x and the sum cancels
    assert abs(up + down + 1.0) <= 4e-16 * (1.0 + up + abs(down))
    assert up >= 0


@FAST
@given(g=st.floats(-5.0, 5.0), r=positive, q1=st.floats(0, 5), q2=st.floats(0, 5))
def test_gaussian_transform_is_monotone(g, r, q1, q2):
    pot = GaussianPotential(g, r)
    lo, hi = sorted((q1, q2))
    a, b = abs(float(potential_ft(pot, lo))), abs(float(potential_ft(pot, hi)))
    assert b <= a * (1 + 1e-15)


@FAST
@given(seed=st.integers(0, 2 ** 64 - 1), idx=st.integers(0, 10 ** 9))
def test_trajectory_seed_is_pure(seed, idx):
    s = trajectory_seed(seed, idx)
    assert s == trajectory_seed(seed, idx) and 0 <= s < 2 ** 64
