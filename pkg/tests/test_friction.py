import math
from types import SimpleNamespace

import numpy as np
import pytest

from qlbe import friction
from qlbe.physcore import GasSpec, GaussianPotential, ParticleSpec, TabulatedPotential, UnitSystem


@pytest.fixture
def heavy():
    return ParticleSpec(100.0)


def random_tabulated(seed):
    rng = np.random.default_rng(seed)
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.2, 5.0, 5)), [6.0]])
    values = np.concatenate([np.sort(rng.uniform(1e-3, 5e-3, 6))[::-1], [0.0]])
    return TabulatedPotential(tuple(knots), tuple(values))


def test_zero_potential_gives_zero(gas, heavy):
    rep = friction.eta(gas, heavy, GaussianPotential(0.0, 1.0))
    assert rep.eta == 0.0 and rep.error_estimate == 0.0
    assert friction.eta_gradient_form_residual(gas, heavy, GaussianPotential(0.0, 1.0)) == 0.0


def test_regression_value(gas, heavy, gauss, units):
    ref = friction.load_reference()
    assert friction.matches_reference(gas, heavy, gauss, units)
    rep = friction.eta(gas, heavy, gauss, units)
    assert rep.eta == pytest.approx(ref["eta"], rel=1e-8)
    assert not friction.matches_reference(gas, ParticleSpec(50.0), gauss, units)


@pytest.mark.parametrize("pot", [GaussianPotential(1.0, 1.0), GaussianPotential(0.3, 2.5)])
def test_adaptive_against_trapezoid_and_closed_form(gas, heavy, pot, units):
    rep = friction.eta(gas, heavy, pot, units)
    trap = friction.eta_trapezoid(gas, heavy, pot, units)
    closed = friction.eta_gaussian_closed_form(gas, heavy, pot.g, pot.r, units)
    assert trap == pytest.approx(rep.eta, rel=1e-8)
    assert closed == pytest.approx(rep.eta, rel=1e-10)
    assert rep.error_estimate < 1e-10 * rep.eta


def test_tabulated_against_trapezoid(gas, heavy, units):
    pot = random_tabulated(0)
    rep = friction.eta(gas, heavy, pot, units)
    trap = friction.eta_trapezoid(gas, heavy, pot, units)
    assert trap == pytest.approx(rep.eta, rel=1e-8)


def test_scaling_with_strength_density_and_mass(gas, heavy, units):
    base = friction.eta(gas, heavy, GaussianPotential(1.0, 1.0), units).eta
    assert friction.eta(gas, heavy, GaussianPotential(2.0, 1.0), units).eta == pytest.approx(
        4 * base, rel=1e-10)
    assert friction.eta(GasSpec(1, 1, 3.0), heavy, GaussianPotential(1.0, 1.0), units).eta == \
        pytest.approx(3 * base, rel=1e-10)
    assert friction.eta(gas, ParticleSpec(200.0), GaussianPotential(1.0, 1.0), units).eta == \
        pytest.approx(base / 2, rel=1e-10)


def test_temperature_dependence(heavy, gauss, units):
    """eta(beta) is not constant: the coefficient carries real temperature dependence."""
    a = friction.eta(GasSpec(1, 0.5, 1), heavy, gauss, units).eta
    b = friction.eta(GasSpec(1, 2.0, 1), heavy, gauss, units).eta
    assert abs(a - b) / max(a, b) > 1e-3


def test_hbar_is_consistent(gas, heavy):
    """With hbar = 2 the closed form and the quadrature still agree."""
    u = UnitSystem(2.0)
    rep = friction.eta(gas, heavy, GaussianPotential(1.0, 1.0), u)
    assert rep.eta == pytest.approx(
        friction.eta_gaussian_closed_form(gas, heavy, 1.0, 1.0, u), rel=1e-10)


def test_samples_and_truncation(gas, heavy, gauss, units):
    rep = friction.eta(gas, heavy, gauss, units, n_samples=51)
    assert rep.samples.shape == (51, 2)
    assert rep.samples[0, 1] == 0.0 and np.all(rep.samples[:, 1] >= 0)
    f_end = rep.samples[-1, 1] * rep.q_max ** 2
    assert f_end <= 1e-17 * np.max(rep.samples[:, 1] * rep.samples[:, 0] ** 2)


@pytest.mark.parametrize("pot", [GaussianPotential(1.0, 1.0), random_tabulated(1),
                                 random_tabulated(2)])
def test_gradient_form_identity(gas, heavy, pot, units):
    assert friction.eta_gradient_form_residual(gas, heavy, pot, units) < 1e-10


def test_fit_decay_rate_recovers_exponential():
    t = np.linspace(0, 2, 21)
    assert friction.fit_decay_rate(t, 3.0 * np.exp(-1.7 * t)) == pytest.approx(1.7, rel=1e-12)
    with pytest.raises(friction.FitError):
        friction.fit_decay_rate(t, np.ones_like(t))
    with pytest.raises(friction.FitError):
        friction.fit_decay_rate(t, -np.ones_like(t))


def test_compare_with_mc_guards():
    zero = friction.FrictionReport(0.0, 0.0, 0.0, np.zeros((0, 2)))
    assert friction.compare_with_mc(zero, None) is None
    rep = friction.FrictionReport(1.0, 0.0, 1.0, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        friction.compare_with_mc(rep, SimpleNamespace(variant="exact"))


def test_compare_with_mc_on_synthetic_ensemble():
    t = np.linspace(0, 2, 41)
    mean = 5.0 * np.exp(-0.8 * t)
    snaps = np.zeros((4, len(t), 3))
    snaps[..., 1] = mean
    ens = SimpleNamespace(variant="brownian_limit", snapshots=snaps, sample_times=t)
    rep = friction.FrictionReport(0.8, 0.0, 1.0, np.zeros((0, 2)))
    assert friction.compare_with_mc(rep, ens) == pytest.approx(0.0, abs=1e-12)
    assert rep.mc_rate == pytest.approx(0.8, rel=1e-12)
    assert math.isclose(rep.deviation, 0.0, abs_tol=1e-12)
