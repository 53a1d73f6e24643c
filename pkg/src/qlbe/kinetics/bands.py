"""Momentum-representation evolution of the statistical operator on a 1D grid.

Under a translation-covariant generator the matrix elements rho(p, p - k) at a
fixed offset k (a *band*) evolve among themselves.  On a uniform grid with
transfers q_l = l * dp, a band of offset k = kappa * dp obeys

    d rho_k(p)/dt = -(i/hbar) (p^2 - (p-k)^2)/(2M) rho_k(p)
                    + sum_l A_l(p - q_l) conj(A_l(p - q_l - k)) rho_k(p - q_l)
                    - 1/2 (Gamma(p) + Gamma(p - k)) rho_k(p),

    Gamma(p) = sum_l |A_l(p)|^2,

where A_l(p) is the amplitude of the jump p -> p + q_l.  This is the Poisson
part of a covariant generator: one amplitude callback fixes both gain and
loss.  Jumps that would leave the grid are dropped from gain *and* loss, so
the truncated generator is still of Lindblad form and conserves the trace.

The collision amplitudes are the 1D analogue of the 3D kernel:
A_l(p) = sqrt(w dp |t~(q_l)|^2 S(q_l, E(q_l, p))) with w the 3D collision
prefactor; the 1D Maxwell-Boltzmann structure factor has the same functional
form as the 3D one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..physcore import (
    GasSpec, ParticleSpec, PotentialSpec, UnitSystem, collision_prefactor, potential_ft, validate,
)
from ..structure_factor import MBExact, MBLimit


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class MomentumGrid1D:
    p_min: float
    p_max: float
    count: int

    def __post_init__(self):
        if self.count < 16:
            raise ValueError("momentum grid needs at least 16 points")
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be < p_max")

    @property
    def spacing(self) -> float:
        return (self.p_max - self.p_min) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.count)


@dataclass
class BandState:
    """Values rho(p_j, p_j - k) for k = offset * dp; entries with p_j - k off-grid are zero."""

    grid: MomentumGrid1D
    offset: int
    values: np.ndarray
    t: float = 0.0

    @property
    def k(self) -> float:
        return self.offset * self.grid.spacing

    def valid(self) -> np.ndarray:
        j = np.arange(self.grid.count)
        return (j - self.offset >= 0) & (j - self.offset < self.grid.count)

    def trace(self) -> float:
        if self.offset != 0:
            raise ValueError("trace is defined on the k = 0 band")
        return float(np.sum(self.values.real))

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)))


def bands_from_matrix(grid: MomentumGrid1D, rho: np.ndarray, offsets=None) -> dict[int, BandState]:
    """Split a momentum-space density matrix rho[j, j'] into bands."""
    n = grid.count
    offsets = range(-(n - 1), n) if offsets is None else offsets
    out = {}
    for kappa in offsets:
        vals = np.zeros(n, dtype=complex)
        j = np.arange(n)
        ok = (j - kappa >= 0) & (j - kappa < n)
        vals[ok] = rho[j[ok], j[ok] - kappa]
        out[kappa] = BandState(grid, kappa, vals)
    return out


def matrix_from_bands(grid: MomentumGrid1D, bands: dict[int, BandState]) -> np.ndarray:
    n = grid.count
    rho = np.zeros((n, n), dtype=complex)
    j = np.arange(n)
    for kappa, band in bands.items():
        ok = (j - kappa >= 0) & (j - kappa < n)
        rho[j[ok], j[ok] - kappa] = band.values[ok]
    return rho


def poisson_band_generator(amplitude: np.ndarray, shifts: np.ndarray, offset: int,
                           phase: np.ndarray | None = None) -> np.ndarray:
    """Band generator built from jump amplitudes alone.

    ``amplitude[l, j]`` is the amplitude of the jump from grid point j to
    j + shifts[l] (ignored when the target is off-grid).  ``phase`` is the
    optional diagonal Hamiltonian contribution for this band.
    """
    L, n = amplitude.shape
    j = np.arange(n)
    in_band = (j - offset >= 0) & (j - offset < n)
    gen = np.zeros((n, n), dtype=complex)
    gamma = np.zeros(n)
    for l, s in enumerate(shifts):
        land = (j + s >= 0) & (j + s < n)
        gamma[land] += np.abs(amplitude[l, land]) ** 2
        # gain into row j from column j - s, both ends of the pair on-grid
        src = j - s
        src_b = src - offset
        ok = (in_band & (src >= 0) & (src < n) & (src_b >= 0) & (src_b < n))
        rows = j[ok]
        gen[rows, src[ok]] += amplitude[l, src[ok]] * np.conj(amplitude[l, src_b[ok]])
    partner = np.zeros(n)
    partner[in_band] = gamma[j[in_band] - offset]
    diag = -0.5 * (gamma + partner)
    if phase is not None:
        diag = diag + phase
    gen[j, j] += np.where(in_band, diag, 0.0)
    return gen


@dataclass
class BandKernel1D:
    grid: MomentumGrid1D
    gas: GasSpec
    particle: ParticleSpec
    potential: PotentialSpec
    variant: str
    units: UnitSystem
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.grid.count
        dp = self.grid.spacing
        self.shifts = np.array([l for l in range(-(n - 1), n) if l != 0])
        q = self.shifts * dp
        p = self.grid.points
        S = MBExact(self.gas) if self.variant == "exact" else MBLimit(self.gas)
        M = self.particle.mass
        weight = collision_prefactor(self.gas, self.units) * dp * potential_ft(
            self.potential, q, self.units) ** 2
        energy = (2 * p[None, :] * q[:, None] + q[:, None] ** 2) / (2 * M)
        self.rates = weight[:, None] * S.value(q[:, None], energy)   # [l, j]
        self.amplitude = np.sqrt(self.rates)

    def jump_rates(self) -> np.ndarray:
        """Rates [l, j] of on-grid jumps j -> j + shifts[l] (zero when off-grid)."""
        n = self.grid.count
        j = np.arange(n)
        land = (j[None, :] + self.shifts[:, None] >= 0) & (j[None, :] + self.shifts[:, None] < n)
        return np.where(land, self.rates, 0.0)

    def loss_rates(self) -> np.ndarray:
        return self.jump_rates().sum(axis=0)

    def hamiltonian_phase(self, offset: int) -> np.ndarray:
        p = self.grid.points
        pk = p - offset * self.grid.spacing
        return -1j * (p * p - pk * pk) / (2 * self.particle.mass * self.units.hbar)

    def generator(self, offset: int) -> np.ndarray:
        if offset not in self._cache:
            self._cache[offset] = poisson_band_generator(
                self.amplitude, self.shifts, offset, self.hamiltonian_phase(offset))
        return self._cache[offset]

    def max_rate(self, offsets=(0,)) -> float:
        return max(float(np.max(np.abs(np.diag(self.generator(k))))) for k in offsets)


def band_kernel_build(grid: MomentumGrid1D, gas: GasSpec, particle: ParticleSpec,
                      potential: PotentialSpec, variant: str = "exact",
                      units: UnitSystem = UnitSystem()) -> BandKernel1D:
    for spec in (gas, particle, potential, units):
        validate(spec)
    if variant not in ("exact", "brownian_limit"):
        raise ValueError(f"unknown kernel variant {variant!r}")
    return BandKernel1D(grid, gas, particle, potential, variant, units)


def rk4_propagator(gen: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for the linear system x' = gen x, as a matrix."""
    a = dt * gen
    eye = np.eye(len(gen), dtype=gen.dtype)
    a2 = a @ a
    a3 = a2 @ a
    return eye + a + a2 / 2 + a3 / 6 + (a3 @ a) / 24


def band_evolve(state, kernel: BandKernel1D, dt: float, steps: int, snapshot_every: int = 0):
    """Evolve one band (BandState) or several (dict offset -> BandState).

    Raises StabilityError if dt times the largest diagonal rate of a band
    generator reaches 0.1.  With ``snapshot_every`` > 0 also returns a list
    of (t, offset, values) snapshots.
    """
    bands = state if isinstance(state, dict) else {state.offset: state}
    for band in bands.values():
        if band.grid != kernel.grid:
            raise ValueError("band and kernel live on different grids")
        if dt * kernel.max_rate([band.offset]) >= 0.1:
            raise StabilityError(
                f"dt * max rate = {dt * kernel.max_rate([band.offset]):.3g} >= 0.1 "
                f"for band offset {band.offset}")
    out = {}
    snaps = []
    for kappa, band in bands.items():
        prop = rk4_propagator(kernel.generator(kappa), dt)
        v = band.values.astype(complex)
        if snapshot_every:
            snaps.append((band.t, kappa, v.copy()))
        for s in range(1, steps + 1):
            v = prop @ v
            if snapshot_every and s % snapshot_every == 0:
                snaps.append((band.t + s * dt, kappa, v.copy()))
        out[kappa] = BandState(band.grid, kappa, v, band.t + steps * dt)
    result = out if isinstance(state, dict) else out[state.offset]
    return (result, snaps) if snapshot_every else result


def translate_bands(bands, shift: float, units: UnitSystem = UnitSystem()):
    """Apply U(a) rho U(a)^dagger with U(a) = exp(-i a p / hbar): phase exp(-i a k / hbar) per band."""
    single = not isinstance(bands, dict)
    items = {bands.offset: bands} if single else bands
    out = {k: BandState(b.grid, k, b.values * np.exp(-1j * shift * b.k / units.hbar), b.t)
           for k, b in items.items()}
    return out[bands.offset] if single else out


def covariance_test(kernel: BandKernel1D, state, shift: float, dt: float, steps: int = 10) -> float:
    """Max |evolve(translate(rho)) - translate(evolve(rho))| over all bands."""
    a = band_evolve(translate_bands(state, shift, kernel.units), kernel, dt, steps)
    b = translate_bands(band_evolve(state, kernel, dt, steps), shift, kernel.units)
    if not isinstance(a, dict):
        a, b = {0: a}, {0: b}
    return max(float(np.max(np.abs(a[k].values - b[k].values))) for k in a)


def maxwell_band(kernel: BandKernel1D) -> BandState:
    """Discrete Maxwell distribution of the particle at the gas temperature (k = 0 band)."""
    p = kernel.grid.points
    w = np.exp(-kernel.gas.beta * p * p / (2 * kernel.particle.mass))
    return BandState(kernel.grid, 0, (w / w.sum()).astype(complex))


def stationarity_residual(kernel: BandKernel1D) -> float:
    """|| G0 rho_maxwell ||_1 / || diag(G0) rho_maxwell ||_1 for the diagonal generator."""
    rho = maxwell_band(kernel).values
    g = kernel.generator(0)
    return float(np.sum(np.abs(g @ rho)) / np.sum(np.abs(np.diag(g) * rho)))


def gillespie_1d(kernel: BandKernel1D, start_index: int, T: float, n_traj: int,
                 seed: int) -> np.ndarray:
    """Grid indices at time T of n_traj discrete jump trajectories started at start_index."""
    from .montecarlo import trajectory_rng

    rates = kernel.jump_rates()           # [l, j]
    total = rates.sum(axis=0)
    cum = np.cumsum(rates, axis=0)
    out = np.empty(n_traj, dtype=int)
    for i in range(n_traj):
        rng = trajectory_rng(seed, i)
        j, t = start_index, 0.0
        while total[j] > 0:
            t += rng.exponential(1.0 / total[j])
            if t >= T:
                break
            l = int(np.searchsorted(cum[:, j], rng.random() * total[j], side="right"))
            j += int(kernel.shifts[min(l, len(kernel.shifts) - 1)])
        out[i] = j
    return out
