"""Physical parameters of the gas, the test particle and the collision potential.

All quantities are plain floats in a consistent unit system; the only
constant carried explicitly is hbar (default 1).  The Fourier transform of
the potential includes the ``(2 pi hbar)^-3`` normalisation so that the
collision prefactor ``(2 pi / hbar) (2 pi hbar)^3 n`` can be used verbatim
everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class SpecError(ValueError):
    """A parameter object violates one of its invariants."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _positive(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SpecError(name, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value) or value <= 0:
        raise SpecError(name, f"must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0


@dataclass(frozen=True)
class GasSpec:
    """Ideal Maxwell-Boltzmann gas: particle mass, inverse temperature, density."""

    mass: float
    beta: float
    density: float


@dataclass(frozen=True)
class ParticleSpec:
    mass: float


@dataclass(frozen=True)
class GaussianPotential:
    """t~(q) = g exp(-q^2 r^2 / (2 hbar^2)) / (2 pi hbar)^3."""

    g: float
    r: float


@dataclass(frozen=True)
class TabulatedPotential:
    """Piecewise-linear t~(|q|) through the knots, zero outside them."""

    q: tuple[float, ...]
    values: tuple[float, ...]
    _q: np.ndarray = field(init=False, repr=False, compare=False)
    _t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        object.__setattr__(self, "_q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "_t", np.asarray(self.values, dtype=float))


PotentialSpec = Union[GaussianPotential, TabulatedPotential]


def validate(spec):
    """Check the invariants of any parameter object; return it unchanged.

    Raises :class:`SpecError` naming the first offending field.
    """
    if isinstance(spec, GasSpec):
        _positive("mass_m", spec.mass)
        _positive("inverse_temperature_beta", spec.beta)
        _positive("number_density_n", spec.density)
    elif isinstance(spec, ParticleSpec):
        _positive("mass_M", spec.mass)
    elif isinstance(spec, UnitSystem):
        _positive("hbar", spec.hbar)
    elif isinstance(spec, GaussianPotential):
        if not math.isfinite(spec.g):
            raise SpecError("strength_g", f"must be finite, got {spec.g!r}")
        if not math.isfinite(spec.r) or spec.r < 0:
            raise SpecError("range_r", f"must be finite and >= 0, got {spec.r!r}")
    elif isinstance(spec, TabulatedPotential):
        if len(spec.q) != len(spec.values):
            raise SpecError("samples", "q and values differ in length")
        if len(spec.q) < 2:
            raise SpecError("samples", "need at least two knots")
        if not np.all(np.isfinite(spec._q)) or spec._q[0] < 0:
            raise SpecError("q", "knots must be finite and >= 0")
        if np.any(np.diff(spec._q) <= 0):
            raise SpecError("ordering", "q knots must be strictly increasing")
        if not np.all(np.isfinite(spec._t)):
            raise SpecError("values", "tabulated values must be finite")
    else:
        raise TypeError(f"not a parameter spec: {type(spec).__name__}")
    return spec


def potential_ft(potential: PotentialSpec, q, units: UnitSystem = UnitSystem()):
    """Fourier transform t~(q) of the collision potential at momentum magnitude q."""
    q = np.abs(np.asarray(q, dtype=float))
    if isinstance(potential, GaussianPotential):
        norm = potential.g / (2.0 * np.pi * units.hbar) ** 3
        return norm * np.exp(-0.5 * (q * potential.r / units.hbar) ** 2)
    return np.interp(q, potential._q, potential._t, left=0.0, right=0.0)


def potential_cutoff(potential: PotentialSpec, units: UnitSystem = UnitSystem(),
                     rel: float = 1e-18) -> float:
    """Momentum beyond which |t~(q)|^2 < rel * max |t~|^2; inf if it never decays."""
    if isinstance(potential, GaussianPotential):
        if potential.r == 0 or potential.g == 0:
            return math.inf if potential.g != 0 else 0.0
        return units.hbar * math.sqrt(-math.log(rel)) / potential.r
    nz = np.nonzero(potential._t)[0]
    if nz.size == 0:
        return 0.0
    return float(potential._q[min(nz[-1] + 1, len(potential._q) - 1)])


def is_zero_potential(potential: PotentialSpec) -> bool:
    if isinstance(potential, GaussianPotential):
        return potential.g == 0
    return not np.any(potential._t)


def collision_prefactor(gas: GasSpec, units: UnitSystem = UnitSystem()) -> float:
    """(2 pi / hbar) (2 pi hbar)^3 n, the weight in front of every collision integral."""
    return 2.0 * np.pi / units.hbar * (2.0 * np.pi * units.hbar) ** 3 * gas.density
