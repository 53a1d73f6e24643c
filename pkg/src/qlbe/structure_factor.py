"""Dynamic structure factors and the relations built on them.

Sign convention (used by every module): momentum ``q`` and energy ``E`` are
positive when transferred *to the test particle*.  A particle with momentum
``p`` ends up at ``p + q`` and gains ``E(q, p) = ((p+q)^2 - p^2) / 2M``.

The dynamic structure factor of the medium,

    S(q, E) = 1/(2 pi hbar N) \\int dt e^{i E t/hbar} <rho_q^dagger rho_q(t)>,

is the only property of the gas that enters the collision dynamics.  For an
ideal Maxwell-Boltzmann gas it is a Gaussian in E (``MBExact``); for small
energy transfers it factorises (``MBLimit``); for a harmonic phonon bath it is
a pair of delta peaks (``Phonon``), kept here as explicit atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .physcore import GasSpec, PotentialSpec, UnitSystem, potential_cutoff, potential_ft
from .quadrature import QuadratureSpec, integrate_1d

# exp(-x^2/2) < 1e-16 beyond this many standard deviations
_GAUSS_TAIL = math.sqrt(-2.0 * math.log(1e-16))


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MBExact:
    gas: GasSpec

    def log_value(self, q, E):
        q = np.abs(np.asarray(q, dtype=float))
        _check_q(q)
        m, beta = self.gas.mass, self.gas.beta
        norm = 0.5 * math.log(beta * m / (2.0 * math.pi))
        return norm - np.log(q) - beta / (8.0 * m) * (2.0 * m * E + q * q) ** 2 / (q * q)

    def value(self, q, E):
        q = np.abs(np.asarray(q, dtype=float))
        _check_q(q)
        m, beta = self.gas.mass, self.gas.beta
        norm = math.sqrt(beta * m / (2.0 * math.pi))
        return norm / q * np.exp(-beta / (8.0 * m) * (2.0 * m * E + q * q) ** 2 / (q * q))


@dataclass(frozen=True)
class MBLimit:
    """Small energy-transfer form of the Maxwell-Boltzmann structure factor."""

    gas: GasSpec

    def log_value(self, q, E):
        q = np.abs(np.asarray(q, dtype=float))
        _check_q(q)
        m, beta = self.gas.mass, self.gas.beta
        norm = 0.5 * math.log(beta * m / (2.0 * math.pi))
        return norm - np.log(q) - beta * q * q / (8.0 * m) - 0.5 * beta * np.asarray(E)

    def value(self, q, E):
        q = np.abs(np.asarray(q, dtype=float))
        _check_q(q)
        m, beta = self.gas.mass, self.gas.beta
        norm = math.sqrt(beta * m / (2.0 * math.pi))
        return norm / q * np.exp(-beta * q * q / (8.0 * m)) * np.exp(-0.5 * beta * np.asarray(E))


@dataclass(frozen=True)
class Phonon:
    """Harmonic phonon bath; ``dispersion`` maps |q| to the angular frequency omega_q."""

    dispersion: Callable[[float], float]
    beta: float

    def value(self, q, E):
        raise DomainError("phonon spectral function is a sum of delta peaks; use phonon_spectral")


SpectralFunction = Union[MBExact, MBLimit, Phonon]


def _check_q(qmag):
    if np.any(qmag == 0):
        raise DomainError("structure factor undefined at q = 0")


def _beta(S: SpectralFunction) -> float:
    return S.beta if isinstance(S, Phonon) else S.gas.beta


def _magnitude(q):
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        return np.abs(q)
    if q.shape[-1] != 3:
        raise ValueError("momentum vectors must have a trailing axis of length 3")
    return np.linalg.norm(q, axis=-1)


def energy_transfer(q, p, M: float):
    """Energy gained by a particle of mass M going from p to p + q."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    pq = p + q
    return (np.sum(pq * pq, axis=-1) - np.sum(p * p, axis=-1)) / (2.0 * M)


def s_eval(S: SpectralFunction, q, E):
    """S(q, E) for a momentum 3-vector (or magnitude) q."""
    return S.value(_magnitude(q), E)


def detailed_balance_residual(S: SpectralFunction, q, E):
    """(S(q,E) - exp(-beta E) S(-q,-E)) / S(q,E), evaluated in log space.

    Working with log S keeps the residual meaningful where S itself underflows.
    """
    if isinstance(S, Phonon):
        raise DomainError("use phonon_detailed_balance_residual for the phonon atoms")
    q = np.asarray(q, dtype=float)
    E = np.asarray(E, dtype=float)
    forward = S.log_value(_magnitude(q), E)
    backward = -_beta(S) * E + S.log_value(_magnitude(-q), -E)
    return -np.expm1(backward - forward)


def response_function(S: SpectralFunction, q, E):
    """Dynamic response chi''(q,E) = pi (1 - exp(beta E)) S(q,E); odd in (q,E)."""
    E = np.asarray(E, dtype=float)
    if np.any(E == 0):
        raise DomainError("chi'' / S has a removable singularity at E = 0; "
                          "use response_slope_at_zero")
    return math.pi * -np.expm1(_beta(S) * E) * s_eval(S, q, E)


def response_slope_at_zero(S: SpectralFunction, q):
    """lim_{E->0} chi''(q,E) / E = -pi beta S(q,0)."""
    return -math.pi * _beta(S) * s_eval(S, q, 0.0)


def _fdt_lower_limit(S: SpectralFunction, qmag: float) -> float:
    m, beta = S.gas.mass, S.gas.beta
    width = qmag / math.sqrt(beta * m)
    return -(qmag * qmag / (2.0 * m) + 1.2 * _GAUSS_TAIL * width)


def fdt_phi(S: SpectralFunction, q, t: float, quad: QuadratureSpec = QuadratureSpec(),
            units: UnitSystem = UnitSystem(), form: str = "structure"):
    """Real correlation functions (phi_minus, phi_plus) at (q, t).

    ``form="structure"`` integrates the structure-factor representation,
    ``form="response"`` the representation through chi''.  Both run over
    E in (-inf, 0], truncated where the Gaussian in E has fallen below 1e-16.
    Returns ``(phi_minus, phi_plus, error_estimate)``.
    """
    if not isinstance(S, MBExact):
        raise DomainError("FDT integrals need the exact Maxwell-Boltzmann form "
                          "(the small-transfer limit grows without bound as E -> -inf)")
    hbar = units.hbar
    beta = S.gas.beta
    qmag = float(_magnitude(q))
    lo = _fdt_lower_limit(S, qmag)
    peak = -qmag * qmag / (2.0 * S.gas.mass)

    if form == "structure":
        def minus(E):
            return math.sin(E * t / hbar) * -math.expm1(beta * E) * S.value(qmag, E)

        def plus(E):
            # coth(beta E/2) (1 - e^{beta E}) = -(1 + e^{beta E})
            return -math.cos(E * t / hbar) * (1.0 + math.exp(beta * E)) * S.value(qmag, E)

        scale_minus = scale_plus = -2.0 / hbar
    elif form == "response":
        def minus(E):
            return math.sin(E * t / hbar) * float(response_function(S, qmag, E))

        def plus(E):
            return (math.cos(E * t / hbar) / math.tanh(0.5 * beta * E)
                    * float(response_function(S, qmag, E)))

        # -2/(pi hbar) for both: consistent with chi'' = pi (1 - e^{beta E}) S
        scale_minus = scale_plus = -2.0 / (math.pi * hbar)
    else:
        raise ValueError(f"unknown form {form!r}")

    im, em = integrate_1d(minus, lo, 0.0, quad, points=[peak], what="phi_minus")
    ip, ep = integrate_1d(plus, lo, 0.0, quad, points=[peak], what="phi_plus")
    return scale_minus * im, scale_plus * ip, max(abs(scale_minus) * em, abs(scale_plus) * ep)


def zeroth_moment(S: SpectralFunction, q, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """\\int dE S(q,E); unity for the exact Maxwell-Boltzmann form."""
    if not isinstance(S, MBExact):
        raise DomainError("zeroth moment is finite only for the exact MB form")
    qmag = float(_magnitude(q))
    m, beta = S.gas.mass, S.gas.beta
    centre = -qmag * qmag / (2.0 * m)
    half = 1.2 * _GAUSS_TAIL * qmag / math.sqrt(beta * m)
    value, _ = integrate_1d(lambda E: float(S.value(qmag, E)), centre - half, centre + half,
                            quad, points=[centre], what="zeroth moment")
    return value


def bose_occupation(beta: float, energy: float) -> float:
    x = beta * energy
    if x == 0:
        raise DomainError("Bose occupation diverges at beta * hbar * omega = 0")
    if x > 0:
        # e^-x / (1 - e^-x) stays finite for large x
        return math.exp(-x) / -math.expm1(-x)
    return 1.0 / math.expm1(x)


def phonon_spectral(dispersion, beta: float, q, units: UnitSystem = UnitSystem()):
    """Delta atoms [(energy, weight), ...] of the phonon spectral function at q.

    Loss atom at -hbar w_q with weight 1 + N, gain atom at +hbar w_q with weight N.
    """
    omega = float(dispersion(float(_magnitude(q))))
    if not omega > 0:
        raise DomainError(f"phonon frequency must be > 0, got {omega!r}")
    energy = units.hbar * omega
    if math.isinf(beta):
        occupation = 0.0
    else:
        occupation = bose_occupation(beta, energy)
    return [(-energy, 1.0 + occupation), (energy, occupation)]


def phonon_detailed_balance_residual(dispersion, beta: float, q,
                                     units: UnitSystem = UnitSystem()) -> float:
    (e_loss, w_loss), (e_gain, w_gain) = phonon_spectral(dispersion, beta, q, units)
    return (w_gain - math.exp(-beta * e_gain) * w_loss) / w_gain


def born_cross_section(potential: PotentialSpec, S: SpectralFunction, p, q, M: float,
                       units: UnitSystem = UnitSystem()):
    """Double-differential Born cross-section d^2 sigma / dOmega' dE' for p -> p + q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pmag = float(np.linalg.norm(p))
    pout = float(np.linalg.norm(p + q))
    if pmag == 0:
        raise DomainError("incoming momentum must be non-zero (flux undefined)")
    if pout == 0:
        raise DomainError("outgoing momentum must be non-zero")
    hbar = units.hbar
    t = float(potential_ft(potential, np.linalg.norm(q), units))
    if t == 0:
        return 0.0
    pref = (2 * math.pi * hbar) ** 6 * (M / (2 * math.pi * hbar ** 2)) ** 2
    return pref * (pout / pmag) * t * t * float(s_eval(S, q, energy_transfer(q, p, M)))


@dataclass(frozen=True)
class TotalCrossSection:
    sigma: float
    loss_rate: float        # (n / 2M) |p| sigma, the scalar symbol of the loss term
    error_estimate: float


def _momentum_cutoff(potential, S, pmag, M, units):
    qc = potential_cutoff(potential, units)
    m, beta = S.gas.mass, S.gas.beta
    mu = m / M
    s = math.sqrt(beta / (8.0 * m))
    tail = 1.2 * _GAUSS_TAIL / math.sqrt(2.0)
    if isinstance(S, MBExact):
        q_s = (2 * mu * pmag + tail / s) / (1.0 + mu)
    else:
        a = s * s * (1 + 2 * mu)
        q_s = beta * pmag / (4 * M * a) + tail / math.sqrt(a)
    return min(qc, q_s)


def total_cross_section(potential: PotentialSpec, S: SpectralFunction, p, M: float,
                        gas: GasSpec, units: UnitSystem = UnitSystem(),
                        quad: QuadratureSpec = QuadratureSpec(abs_tol=0.0, rel_tol=1e-10)):
    """Total cross-section sigma(|p|) from the Born expression.

    Integrates over the outgoing momentum magnitude p' (i.e. outgoing energy)
    and, at fixed p', over the scattering angle rewritten in terms of the
    transfer |q| in [|p'-p|, p'+p].
    """
    if not isinstance(S, (MBExact, MBLimit)):
        raise DomainError("total cross-section needs a smooth structure factor")
    pmag = float(_magnitude(p))
    if pmag == 0:
        raise DomainError("incoming momentum must be non-zero")
    hbar = units.hbar
    qmax = _momentum_cutoff(potential, S, pmag, M, units)
    if qmax == 0 or not np.any(potential_ft(potential, np.linspace(0, qmax, 64), units)):
        return TotalCrossSection(0.0, 0.0, 0.0)
    e_in = pmag * pmag / (2 * M)
    kinks = _knots(potential)

    def inner(pout):
        lo, hi = abs(pout - pmag), min(pout + pmag, qmax)
        if hi <= lo:
            return 0.0
        energy = pout * pout / (2 * M) - e_in

        def f(qm):
            t = float(potential_ft(potential, qm, units))
            return qm * t * t * float(S.value(qm, energy))

        v, _ = integrate_1d(f, lo, hi, quad, points=kinks, what="sigma inner")
        return v * pout * pout / M / (pmag * pout)

    value, err = integrate_1d(inner, 0.0, pmag + qmax, quad, points=[pmag], what="sigma")
    pref = (2 * math.pi * hbar) ** 6 * (M / (2 * math.pi * hbar ** 2)) ** 2
    sigma = pref * 2 * math.pi * value / pmag
    err = pref * 2 * math.pi * err / pmag
    return TotalCrossSection(sigma, gas.density / (2 * M) * pmag * sigma, err)


def _knots(potential):
    q = getattr(potential, "q", None)
    return list(q) if q is not None else None
