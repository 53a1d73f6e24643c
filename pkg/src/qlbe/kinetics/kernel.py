"""Collision kernel of the quantum linear Boltzmann equation, 3D diagonal part.

For a particle at momentum p the jump intensity to p + q is

    lambda(p, q) = pref |t~(q)|^2 S(q, E(q, p)),   pref = (2 pi/hbar)(2 pi hbar)^3 n,

and the loss rate is its integral over q.  The angular part of that integral
is done in closed form (an erf window for the exact MB form, sinh(x)/x for the
small-transfer form), leaving a radial quadrature.

Sampling uses a p-independent radial envelope: since q S(q, E) <= C = sqrt(beta m / 2 pi)
for the exact form, candidates are drawn isotropically with radial density
proportional to q |t~(q)|^2 (or a piecewise-constant majorant of it) and
accepted with probability q S(q, E(q,p)) / C.  The same envelope doubles as
the majorant intensity for thinning in the jump simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..physcore import (
    GasSpec, GaussianPotential, ParticleSpec, PotentialSpec, TabulatedPotential,
    UnitSystem, collision_prefactor, is_zero_potential, potential_ft, validate,
)
from ..quadrature import QuadratureSpec, integrate_1d
from ..structure_factor import MBExact, MBLimit, _momentum_cutoff

# candidate bins per tabulated knot interval
_TAB_SUBDIVISION = 8


class RateOverflowError(RuntimeError):
    pass


def _erf_window(x, d):
    """(erf(x + d) - erf(x - d)) / (2 d), accurate for small d and large x."""
    x = np.asarray(x, dtype=float)
    small = d < 1e-7
    if small:
        return 2.0 / math.sqrt(math.pi) * np.exp(-x * x) * (1.0 + (2 * x * x - 1) * d * d / 3)
    hi, lo = x + d, x - d
    # erfc difference avoids cancellation when both arguments are large and positive
    out = np.where(lo > 0,
                   special.erfc(lo) - special.erfc(hi),
                   special.erf(hi) - special.erf(lo))
    return out / (2.0 * d)


class RadialEnvelope:
    """Isotropic candidate distribution with radial density proportional to h(q) >= q |t~(q)|^2.

    ``mass`` is 4 pi \\int h(q) dq.  ``draw(u)`` maps uniforms to radii and
    ``ratio(q)`` is q |t~(q)|^2 / h(q) in [0, 1].
    """

    def __init__(self, potential: PotentialSpec, units: UnitSystem):
        self.potential = potential
        self.units = units
        if is_zero_potential(potential):
            self.mass = 0.0
            self.kind = "zero"
        elif isinstance(potential, GaussianPotential):
            if potential.r == 0:
                raise RateOverflowError("flat potential (r = 0): candidate intensity is unbounded")
            amp = potential.g / (2 * math.pi * units.hbar) ** 3
            self.alpha = (potential.r / units.hbar) ** 2
            self.mass = 4 * math.pi * amp * amp / (2 * self.alpha)
            self.kind = "gaussian"
        else:
            self._build_tabulated(potential)
            self.kind = "tabulated"

    def _build_tabulated(self, potential: TabulatedPotential):
        q, t = potential._q, potential._t
        edges = [q[0]]
        for lo, hi in zip(q[:-1], q[1:]):
            edges.extend(np.linspace(lo, hi, _TAB_SUBDIVISION + 1)[1:])
        edges = np.asarray(edges)
        t_edges = np.interp(edges, q, t)
        # |t~| is linear on each bin, so |t~|^2 peaks at an endpoint
        bound = edges[1:] * np.maximum(t_edges[:-1] ** 2, t_edges[1:] ** 2)
        weights = bound * np.diff(edges)
        self.edges = edges
        self.bound = bound
        self.cum = np.concatenate([[0.0], np.cumsum(weights)])
        self.mass = 4 * math.pi * self.cum[-1]

    def draw(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return np.sqrt(-np.log1p(-u) / self.alpha)
        if self.kind == "zero":
            return np.zeros_like(u)
        target = u * self.cum[-1]
        k = np.clip(np.searchsorted(self.cum, target, side="right") - 1, 0, len(self.bound) - 1)
        w = self.cum[k + 1] - self.cum[k]
        frac = np.where(w > 0, (target - self.cum[k]) / np.where(w > 0, w, 1.0), 0.0)
        return self.edges[k] + frac * (self.edges[k + 1] - self.edges[k])

    def ratio(self, q):
        if self.kind != "tabulated":
            return np.ones_like(np.asarray(q, dtype=float))
        t = potential_ft(self.potential, q, self.units)
        k = np.clip(np.searchsorted(self.edges, q, side="right") - 1, 0, len(self.bound) - 1)
        b = self.bound[k]
        return np.where(b > 0, q * t * t / np.where(b > 0, b, 1.0), 0.0)


def isotropic_directions(u_cos, u_phi):
    c = 2.0 * np.asarray(u_cos) - 1.0
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    phi = 2.0 * math.pi * np.asarray(u_phi)
    return np.stack([s * np.cos(phi), s * np.sin(phi), c], axis=-1)


@dataclass
class CollisionKernel:
    """Loss rate and jump law for the momentum-diagonal collision dynamics."""

    gas: GasSpec
    particle: ParticleSpec
    potential: PotentialSpec
    variant: str            # "exact" or "brownian_limit"
    units: UnitSystem
    quad: QuadratureSpec

    def __post_init__(self):
        self.structure = MBExact(self.gas) if self.variant == "exact" else MBLimit(self.gas)
        self.prefactor = collision_prefactor(self.gas, self.units)
        self.norm = math.sqrt(self.gas.beta * self.gas.mass / (2 * math.pi))
        self.zero = is_zero_potential(self.potential)
        self.envelope = RadialEnvelope(self.potential, self.units)
        # candidate intensity before the p-dependent bound factor
        self.candidate_rate = self.prefactor * self.norm * self.envelope.mass

    # ---- loss rate -----------------------------------------------------------
    def angular_integral(self, q, pmag):
        """\\int_{-1}^{1} dc  q S(q, E(q, p)) / C with c the cosine between q and p."""
        m, beta, M = self.gas.mass, self.gas.beta, self.particle.mass
        mu = m / M
        s = math.sqrt(beta / (8 * m))
        q = np.asarray(q, dtype=float)
        if self.variant == "exact":
            return 2.0 * math.sqrt(math.pi) / 2 * _erf_window(s * q * (1 + mu), 2 * mu * pmag * s)
        x = beta * q * pmag / (2 * M)
        shape = np.exp(-s * s * q * q * (1 + 2 * mu))
        sinhc = np.where(np.abs(x) < 1e-8, 1.0 + x * x / 6, np.sinh(x) / np.where(x == 0, 1, x))
        return shape * 2.0 * sinhc

    def radial_density(self, q, pmag):
        """Unnormalised density of |q| for jumps out of |p| (includes the q^2 measure)."""
        t = potential_ft(self.potential, q, self.units)
        q = np.asarray(q, dtype=float)
        return 2 * math.pi * self.prefactor * self.norm * q * t * t * self.angular_integral(q, pmag)

    def rate(self, p) -> float:
        """Total jump (loss) rate at momentum p (vector or magnitude)."""
        if self.zero:
            return 0.0
        pmag = float(np.linalg.norm(np.atleast_1d(np.asarray(p, dtype=float))))
        qmax = _momentum_cutoff(self.potential, self.structure, pmag, self.particle.mass,
                                self.units)
        points = list(getattr(self.potential, "q", [])) or None
        value, _ = integrate_1d(lambda q: float(self.radial_density(q, pmag)), 0.0, qmax,
                                self.quad, points=points, what="loss rate")
        return value

    # ---- sampling ------------------------------------------------------------
    def bound_factor(self, pmag):
        """Upper bound on q S(q, E(q,p)) / C over all q for this |p|."""
        pmag = np.asarray(pmag, dtype=float)
        if self.variant == "exact":
            return np.ones_like(pmag)
        m, beta, M = self.gas.mass, self.gas.beta, self.particle.mass
        mu = m / M
        return np.exp(beta * m * pmag * pmag / (2 * M * M * (1 + 2 * mu)))

    def acceptance(self, q, p):
        """Acceptance probability of candidate jumps q (n,3) from momenta p (n,3)."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        qmag = np.linalg.norm(q, axis=-1)
        m, beta, M = self.gas.mass, self.gas.beta, self.particle.mass
        energy = (2 * np.sum(p * q, axis=-1) + qmag * qmag) / (2 * M)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.variant == "exact":
                core = np.exp(-beta / (8 * m) * (2 * m * energy + qmag * qmag) ** 2 / (qmag * qmag))
            else:
                core = np.exp(-beta * qmag * qmag / (8 * m) - 0.5 * beta * energy)
            core = np.where(qmag > 0, core, 0.0)
        pmag = np.linalg.norm(p, axis=-1)
        return core / self.bound_factor(pmag) * self.envelope.ratio(qmag)

    def candidates(self, u):
        """Map uniforms u[..., 0:3] to candidate transfers (radius, cos, phi)."""
        radius = self.envelope.draw(u[..., 0])
        return radius[..., None] * isotropic_directions(u[..., 1], u[..., 2])

    def sample(self, p, n: int, rng: np.random.Generator, max_rounds: int = 10_000):
        """Draw n momentum transfers from the normalised jump law at momentum p."""
        if self.zero:
            raise RateOverflowError("zero potential: no jumps to sample")
        p = np.asarray(p, dtype=float)
        out = np.empty((0, 3))
        for _ in range(max_rounds):
            need = n - len(out)
            if need <= 0:
                break
            batch = max(64, int(1.5 * need))
            u = rng.random((batch, 4))
            q = self.candidates(u)
            keep = u[:, 3] < self.acceptance(q, np.broadcast_to(p, q.shape))
            out = np.concatenate([out, q[keep]])
        else:
            raise RateOverflowError("rejection sampler acceptance too low")
        return out[:n]

    def sampler(self, p, rng: np.random.Generator):
        return self.sample(p, 1, rng)[0]


def kernel_build(gas: GasSpec, particle: ParticleSpec, potential: PotentialSpec,
                 variant: str = "exact", units: UnitSystem = UnitSystem(),
                 quad: QuadratureSpec = QuadratureSpec(abs_tol=0.0, rel_tol=1e-11)):
    """Collision kernel for the exact ("exact") or Brownian-limit ("brownian_limit") form."""
    for spec in (gas, particle, potential, units):
        validate(spec)
    if variant not in ("exact", "brownian_limit"):
        raise ValueError(f"unknown kernel variant {variant!r}")
    return CollisionKernel(gas, particle, potential, variant, units, quad)


def mean_free_time(kernel: CollisionKernel, quad: QuadratureSpec = QuadratureSpec(rel_tol=1e-6)):
    """1 / <rate> averaged over the Maxwell distribution of the particle at the gas temperature."""
    if kernel.zero:
        return math.inf
    scale = math.sqrt(kernel.particle.mass / kernel.gas.beta)

    def weighted(p):
        # Maxwell speed density in units of the thermal momentum
        x = p / scale
        return math.sqrt(2 / math.pi) * x * x * math.exp(-0.5 * x * x) / scale * kernel.rate(p)

    mean_rate, _ = integrate_1d(weighted, 0.0, 9.0 * scale, quad, what="mean rate")
    return 1.0 / mean_rate
