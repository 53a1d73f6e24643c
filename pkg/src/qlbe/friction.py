"""Microphysical friction coefficient of the heavy test particle.

    eta = (beta / 2M) (2 pi / hbar) (2 pi hbar)^3 n \\int d^3q |t~(q)|^2 (q^2/3) S(q, 0)

The angular integral is trivial by isotropy, leaving a radial quadrature
4 pi \\int dq q^2 (q^2/3) |t~|^2 S(q,0), truncated where the integrand has
dropped below 1e-18 of its peak.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .physcore import (
    GasSpec, GaussianPotential, ParticleSpec, PotentialSpec, UnitSystem, collision_prefactor,
    is_zero_potential, potential_cutoff, potential_ft, validate,
)
from .quadrature import QuadratureSpec, integrate_1d
from .structure_factor import MBExact

TRUNCATION = 1e-18


class FitError(RuntimeError):
    pass


@dataclass
class FrictionReport:
    eta: float
    error_estimate: float
    q_max: float
    samples: np.ndarray = field(repr=False)      # columns: q, q^2 |t~|^2 S(q,0)
    mc_rate: float | None = None
    deviation: float | None = None


def _prefactor(gas: GasSpec, particle: ParticleSpec, units: UnitSystem) -> float:
    return gas.beta / (2 * particle.mass) * collision_prefactor(gas, units) * 4 * math.pi / 3


def _radial(gas, potential, units):
    S = MBExact(gas)

    def f(q):
        q = np.asarray(q, dtype=float)
        t = potential_ft(potential, q, units)
        with np.errstate(invalid="ignore", divide="ignore"):
            s0 = np.where(q > 0, S.value(np.where(q > 0, q, 1.0), 0.0), 0.0)
        return q ** 4 * t * t * s0

    return f


def truncation_point(gas: GasSpec, potential: PotentialSpec, units: UnitSystem = UnitSystem(),
                     rel: float = TRUNCATION) -> float:
    """Radius beyond which the friction integrand stays below rel * peak."""
    f = _radial(gas, potential, units)
    s = math.sqrt(gas.beta / (8 * gas.mass))
    q_s = 1.05 * math.sqrt(-math.log(rel) + 10.0) / s
    hi = min(potential_cutoff(potential, units), q_s)
    grid = np.linspace(0.0, hi, 20001)
    vals = f(grid)
    peak = vals.max()
    if peak <= 0:
        return 0.0
    above = np.flatnonzero(vals >= rel * peak)
    return float(grid[min(above[-1] + 1, len(grid) - 1)])


def eta(gas: GasSpec, particle: ParticleSpec, potential: PotentialSpec,
        units: UnitSystem = UnitSystem(),
        quad: QuadratureSpec = QuadratureSpec(abs_tol=0.0, rel_tol=1e-12),
        n_samples: int = 201) -> FrictionReport:
    """Friction coefficient by adaptive quadrature, with integrand samples attached."""
    for spec in (gas, particle, potential, units):
        validate(spec)
    if is_zero_potential(potential):
        return FrictionReport(0.0, 0.0, 0.0, np.zeros((0, 2)))
    f = _radial(gas, potential, units)
    q_max = truncation_point(gas, potential, units)
    points = list(getattr(potential, "q", [])) or None
    value, err = integrate_1d(lambda q: float(f(q)), 0.0, q_max, quad, points=points,
                              what="friction integral")
    pref = _prefactor(gas, particle, units)
    qs = np.linspace(0.0, q_max, n_samples)
    with np.errstate(invalid="ignore", divide="ignore"):
        samples = np.column_stack([qs, np.where(qs > 0, f(qs) / np.where(qs > 0, qs, 1) ** 2, 0)])
    return FrictionReport(pref * value, pref * err, q_max, samples)


def eta_trapezoid(gas: GasSpec, particle: ParticleSpec, potential: PotentialSpec,
                  units: UnitSystem = UnitSystem(), n_points: int = 1_000_001) -> float:
    """Same integral on a uniform grid with the composite trapezoid rule."""
    if is_zero_potential(potential):
        return 0.0
    q_max = truncation_point(gas, potential, units)
    q = np.linspace(0.0, q_max, n_points)
    return _prefactor(gas, particle, units) * float(np.trapezoid(_radial(gas, potential, units)(q), q))


def eta_gaussian_closed_form(gas: GasSpec, particle: ParticleSpec, g: float, r: float,
                             units: UnitSystem = UnitSystem()) -> float:
    """Closed form for the Gaussian potential: \\int q^3 exp(-a q^2) dq = 1 / (2 a^2)."""
    hbar = units.hbar
    amp = g / (2 * math.pi * hbar) ** 3
    a = (r / hbar) ** 2 + gas.beta / (8 * gas.mass)
    norm = math.sqrt(gas.beta * gas.mass / (2 * math.pi))
    return _prefactor(gas, particle, units) * amp * amp * norm / (2 * a * a)


def eta_gradient_form_residual(gas: GasSpec, particle: ParticleSpec, potential: PotentialSpec,
                               units: UnitSystem = UnitSystem(),
                               quad: QuadratureSpec = QuadratureSpec(abs_tol=0.0, rel_tol=1e-12),
                               seed: int = 0) -> float:
    """Relative mismatch between the q^2/3 S(q,0) form and the density-gradient form.

    The gradient form uses grad rho_q = q rho_q and the zero-frequency
    autocorrelation (1/N) \\int dt <rho_q^dagger rho_q(t)> = 2 pi hbar S(q, 0)
    with prefactor (beta / 6M)(2 pi / hbar)(2 pi hbar)^2 n.  Both integrands are
    compared pointwise on the quadrature range and then integrated.
    """
    if is_zero_potential(potential):
        return 0.0
    hbar = units.hbar
    S = MBExact(gas)
    rng = np.random.default_rng(seed)
    pref_direct = gas.beta / (2 * particle.mass) * collision_prefactor(gas, units)
    pref_grad = (gas.beta / (6 * particle.mass) * (2 * math.pi / hbar)
                 * (2 * math.pi * hbar) ** 2 * gas.density)

    def direct(q):
        t = float(potential_ft(potential, q, units))
        return pref_direct * 4 * math.pi * q * q * t * t * (q * q / 3) * float(S.value(q, 0.0))

    def gradient(q):
        t = float(potential_ft(potential, q, units))
        n_hat = rng.normal(size=3)
        grad = q * n_hat / np.linalg.norm(n_hat)          # grad rho_q = q rho_q
        autocorr = 2 * math.pi * hbar * float(S.value(q, 0.0))
        return pref_grad * 4 * math.pi * q * q * t * t * float(grad @ grad) * autocorr

    q_max = truncation_point(gas, potential, units)
    probe = np.linspace(q_max / 500, q_max, 500)
    d = np.array([direct(q) for q in probe])
    g = np.array([gradient(q) for q in probe])
    scale = np.max(np.abs(d))
    pointwise = float(np.max(np.abs(d - g)) / scale) if scale > 0 else 0.0

    points = list(getattr(potential, "q", [])) or None
    e1, _ = integrate_1d(direct, 0.0, q_max, quad, points=points, what="direct form")
    e2, _ = integrate_1d(gradient, 0.0, q_max, quad, points=points, what="gradient form")
    integrated = abs(e2 - e1) / abs(e1) if e1 else 0.0
    return max(pointwise, integrated)


def fit_decay_rate(times, values) -> float:
    """Least-squares rate k of values ~ values[0] exp(-k t), fitted in log space through t = 0."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values[0] <= 0:
        raise FitError("initial mean momentum must be positive along its own direction")
    keep = (values > 0.05 * values[0]) & (times > 0)
    if keep.sum() < 3:
        raise FitError("fewer than three usable points for the exponential fit")
    t = times[keep]
    y = np.log(values[keep] / values[0])
    k = -float(np.sum(t * y) / np.sum(t * t))
    if not k > 0:
        raise FitError(f"mean momentum does not decay (fitted rate {k:.3g})")
    return k


def compare_with_mc(report: FrictionReport, ensemble, t_max: float | None = None) -> float | None:
    """Fit the relaxation of <p(t)> in a Brownian-limit ensemble and compare with eta.

    Returns |fit - eta| / eta (also stored on the report), or None when eta
    is zero and the comparison is meaningless.
    """
    if report.eta == 0:
        return None
    if ensemble.variant != "brownian_limit":
        raise ValueError("compare_with_mc expects a Brownian-limit ensemble")
    mean0 = ensemble.snapshots[:, 0].mean(axis=0)
    norm0 = float(np.linalg.norm(mean0))
    if norm0 == 0:
        raise FitError("initial mean momentum is zero")
    direction = mean0 / norm0
    projected = ensemble.snapshots.mean(axis=0) @ direction
    times = ensemble.sample_times
    if t_max is not None:
        sel = times <= t_max
        times, projected = times[sel], projected[sel]
    rate = fit_decay_rate(times, projected)
    report.mc_rate = rate
    report.deviation = abs(rate - report.eta) / report.eta
    return report.deviation


def load_reference() -> dict:
    """The committed regression value for the reference scenario, with its provenance."""
    text = resources.files("qlbe").joinpath("data/friction_reference.json").read_text("utf-8")
    return json.loads(text)


def matches_reference(gas: GasSpec, particle: ParticleSpec, potential: PotentialSpec,
                      units: UnitSystem, reference: dict | None = None) -> bool:
    ref = (reference or load_reference())["scenario"]
    pot = ref["potential"]
    return (gas == GasSpec(**ref["gas"]) and particle == ParticleSpec(**ref["particle"])
            and units == UnitSystem(**ref["units"]) and pot["kind"] == "gaussian"
            and potential == GaussianPotential(pot["g"], pot["r"]))
