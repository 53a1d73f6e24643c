"""Diffusive (heavy-particle) limit of the collision dynamics, one Cartesian direction.

    d rho/dt = -(i/hbar)[p^2/2M, rho] - (i/hbar)(eta/2)[x, {p, rho}]
               - (D_pp/hbar^2)[x, [x, rho]] - (D_xx/hbar^2)[p, [p, rho]]

with D_pp = M eta / beta and D_xx = beta hbar^2 eta / (16 M), so that
D_pp D_xx = (hbar eta / 4)^2: the dissipator is of Lindblad form with the
single operator x + i (beta hbar / 4M) p, and positivity is preserved.

Two independent solvers are provided.  The equation is quadratic in x and p,
so first and second moments obey a closed linear system,

    d<x>/dt  = <p>/M                 d<p>/dt  = -eta <p>
    dVx/dt   = 2 Cxp/M + 2 D_xx      dCxp/dt  = Vp/M - eta Cxp
    dVp/dt   = -2 eta Vp + 2 D_pp

(Cxp the symmetrised covariance), solved exactly by a matrix exponential.
The grid solver integrates the master equation itself for a density matrix on
a periodic position grid with a spectral momentum operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .physcore import UnitSystem

# RK4 is stable for |lambda dt| below ~2.6 on both real and imaginary axes
_RK4_LIMIT = 2.5
POSITIVITY_ABORT = -1e-5


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class ThermalSpreads:
    dp_th: float
    dx_th: float


@dataclass(frozen=True)
class Coefficients:
    eta: float
    D_pp: float
    D_xx: float
    mass: float
    beta: float
    hbar: float

    @property
    def spreads(self) -> ThermalSpreads:
        return thermal_spreads(self.mass, self.beta, UnitSystem(self.hbar))


def thermal_spreads(M: float, beta: float, units: UnitSystem = UnitSystem()) -> ThermalSpreads:
    """Thermal momentum spread sqrt(M/beta) and thermal length hbar sqrt(beta/4M)."""
    return ThermalSpreads(math.sqrt(M / beta), units.hbar * math.sqrt(beta / (4 * M)))


def coefficients(eta: float, M: float, beta: float, units: UnitSystem = UnitSystem()) -> Coefficients:
    if not eta >= 0:
        raise ValueError(f"eta must be >= 0, got {eta!r}")
    if not (M > 0 and beta > 0):
        raise ValueError("M and beta must be > 0")
    hbar = units.hbar
    return Coefficients(eta, M * eta / beta, beta * hbar * hbar * eta / (16 * M), M, beta, hbar)


@dataclass(frozen=True)
class GaussianState1D:
    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float = 0.0

    def uncertainty_product(self) -> float:
        return self.var_x * self.var_p - self.cov_xp ** 2

    def check(self, hbar: float = 1.0, tol: float = 1e-10) -> "GaussianState1D":
        if self.var_x < 0 or self.var_p < 0:
            raise ValueError("variances must be >= 0")
        if self.uncertainty_product() < hbar * hbar / 4 - tol:
            raise ValueError("covariance violates the Heisenberg bound")
        return self


def moment_generator(coeff: Coefficients) -> np.ndarray:
    """Matrix A of d/dt (mx, mp, Vx, Cxp, Vp, 1) = A (mx, mp, Vx, Cxp, Vp, 1)."""
    M, eta = coeff.mass, coeff.eta
    A = np.zeros((6, 6))
    A[0, 1] = 1 / M
    A[1, 1] = -eta
    A[2, 3] = 2 / M
    A[2, 5] = 2 * coeff.D_xx
    A[3, 4] = 1 / M
    A[3, 3] = -eta
    A[4, 4] = -2 * eta
    A[4, 5] = 2 * coeff.D_pp
    return A


def evolve_moments(state: GaussianState1D, coeff: Coefficients, t: float) -> GaussianState1D:
    y0 = np.array([state.mean_x, state.mean_p, state.var_x, state.cov_xp, state.var_p, 1.0])
    y = expm(moment_generator(coeff) * t) @ y0
    return GaussianState1D(y[0], y[1], y[2], y[4], y[3])


# ---------------------------------------------------------------------------
# position grid
# ---------------------------------------------------------------------------

@dataclass
class GridDensityMatrix:
    """Density matrix rho[j, k] = <x_j|rho|x_k> dx on a periodic grid of N cells."""

    x: np.ndarray
    rho: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n(self) -> int:
        return len(self.x)

    def momenta(self, hbar: float = 1.0) -> np.ndarray:
        return 2 * math.pi * hbar * np.fft.fftfreq(self.n, self.dx)

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def boundary_weight(self, cells: int = 4) -> float:
        d = np.abs(np.diag(self.rho))
        return float(d[:cells].sum() + d[-cells:].sum())


def position_grid(length: float, n: int) -> np.ndarray:
    if n > 256:
        raise ValueError("grid solver is limited to N <= 256 points")
    if n < 8:
        raise ValueError("grid needs at least 8 points")
    dx = length / n
    return -0.5 * length + dx * np.arange(n)


def gaussian_density_matrix(state: GaussianState1D, x: np.ndarray,
                            units: UnitSystem = UnitSystem()) -> GridDensityMatrix:
    """Sample the Gaussian state with the given moments on the grid, trace-normalised."""
    hbar = units.hbar
    state.check(hbar)
    xa = x[:, None]
    xb = x[None, :]
    centre = 0.5 * (xa + xb) - state.mean_x
    y = xa - xb
    coherence = state.var_p - state.cov_xp ** 2 / state.var_x
    rho = (np.exp(-centre ** 2 / (2 * state.var_x))
           * np.exp(1j * (state.mean_p + state.cov_xp * centre / state.var_x) * y / hbar)
           * np.exp(-coherence * y * y / (2 * hbar * hbar)))
    rho = 0.5 * (rho + rho.conj().T)
    return GridDensityMatrix(x.copy(), rho / np.trace(rho).real)


def maximally_mixed(x: np.ndarray) -> GridDensityMatrix:
    n = len(x)
    return GridDensityMatrix(x.copy(), np.eye(n, dtype=complex) / n)


class _GridOperator:
    def __init__(self, x, coeff: Coefficients):
        self.x = x
        self.coeff = coeff
        n = len(x)
        dx = x[1] - x[0]
        hbar = coeff.hbar
        self.p = 2 * math.pi * hbar * np.fft.fftfreq(n, dx)
        self.dX = x[:, None] - x[None, :]
        self.dX2 = self.dX ** 2

    def apply_p(self, R, power=1):
        return np.fft.ifft(self.p[:, None] ** power * np.fft.fft(R, axis=0), axis=0)

    def rhs(self, R):
        c = self.coeff
        hbar, M = c.hbar, c.mass
        F = np.fft.fft(R, axis=0)
        PR = np.fft.ifft(self.p[:, None] * F, axis=0)
        P2R = np.fft.ifft(self.p[:, None] ** 2 * F, axis=0)
        RP = PR.conj().T
        RP2 = P2R.conj().T
        out = (-1j / hbar) / (2 * M) * (P2R - RP2)
        if c.eta:
            PRP = self.apply_p(RP)
            out += (-1j / hbar) * (c.eta / 2) * self.dX * (PR + RP)
            out -= (c.D_pp / hbar ** 2) * self.dX2 * R
            out -= (c.D_xx / hbar ** 2) * (P2R - 2 * PRP + RP2)
        return out

    def spectral_bound(self) -> float:
        c = self.coeff
        pmax = float(np.max(np.abs(self.p)))
        span = float(self.x[-1] - self.x[0])
        return (pmax ** 2 / (2 * c.mass * c.hbar) + c.eta * span * pmax / c.hbar
                + c.D_pp * span ** 2 / c.hbar ** 2 + 4 * c.D_xx * pmax ** 2 / c.hbar ** 2)

    def moments(self, R):
        d = np.diag(R).real
        mx = float(np.sum(self.x * d))
        vx = float(np.sum(self.x ** 2 * d)) - mx * mx
        pd = np.diag(self.apply_p(R))
        mp = float(np.sum(pd).real)
        vp = float(np.sum(np.diag(self.apply_p(R, 2))).real) - mp * mp
        cxp = float(np.sum(self.x * pd).real) - mx * mp
        return mx, mp, vx, vp, cxp


def suggest_dt(grid: GridDensityMatrix, coeff: Coefficients, safety: float = 0.8) -> float:
    """Largest step the RK4 integrator tolerates on this grid, times ``safety``."""
    return safety * _RK4_LIMIT / _GridOperator(grid.x, coeff).spectral_bound()


def grid_moments(rho: GridDensityMatrix, coeff: Coefficients) -> GaussianState1D:
    mx, mp, vx, vp, cxp = _GridOperator(rho.x, coeff).moments(rho.rho)
    return GaussianState1D(mx, mp, vx, vp, cxp)


def positivity_check(rho: GridDensityMatrix) -> float:
    """Smallest eigenvalue of the (Hermitian) density matrix."""
    return float(np.linalg.eigvalsh(rho.rho)[0])


@dataclass
class GridEvolution:
    rho: GridDensityMatrix
    # rows: t, mean_x, mean_p, var_x, var_p, cov_xp, min_eig
    moments: np.ndarray
    min_eig: float
    aborted: bool = False
    snapshots: list = field(default_factory=list, repr=False)


def evolve_grid(rho: GridDensityMatrix, coeff: Coefficients, dt: float, steps: int,
                record_every: int = 1, monitor_every: int = 1, snapshot_every: int = 0,
                t0: float = 0.0) -> GridEvolution:
    """Integrate the master equation with classical RK4 on the position grid.

    Hermiticity is restored after every step; the smallest eigenvalue is
    monitored every ``monitor_every`` steps and the run stops (``aborted``)
    if it drops below -1e-5.
    """
    op = _GridOperator(rho.x, coeff)
    bound = op.spectral_bound()
    if dt * bound > _RK4_LIMIT:
        raise StabilityError(f"dt = {dt:.3g} exceeds the RK4 limit {_RK4_LIMIT / bound:.3g} "
                             "for this grid")
    R = rho.rho.astype(complex)
    rows = []
    snaps = []
    worst = positivity_check(rho)

    def record(step, R, eig):
        t = t0 + step * dt
        rows.append((t, *op.moments(R), eig))

    record(0, R, worst)
    if snapshot_every:
        snaps.append((t0, R.copy()))
    aborted = False
    eig = worst
    for step in range(1, steps + 1):
        k1 = op.rhs(R)
        k2 = op.rhs(R + 0.5 * dt * k1)
        k3 = op.rhs(R + 0.5 * dt * k2)
        k4 = op.rhs(R + dt * k3)
        R = R + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        R = 0.5 * (R + R.conj().T)
        if monitor_every and (step % monitor_every == 0 or step == steps):
            eig = float(np.linalg.eigvalsh(R)[0])
            worst = min(worst, eig)
            if eig < POSITIVITY_ABORT:
                aborted = True
        if step % record_every == 0 or step == steps or aborted:
            record(step, R, eig)
        if snapshot_every and step % snapshot_every == 0:
            snaps.append((t0 + step * dt, R.copy()))
        if aborted:
            break
    return GridEvolution(GridDensityMatrix(rho.x.copy(), R), np.asarray(rows), worst, aborted,
                         snaps)


def shift_cells(rho: GridDensityMatrix, cells: int) -> GridDensityMatrix:
    """Cyclic translation of the state by ``cells`` grid cells."""
    return GridDensityMatrix(rho.x, np.roll(rho.rho, (cells, cells), axis=(0, 1)))


def translation_covariance_grid(coeff: Coefficients, rho: GridDensityMatrix, shift: float,
                                dt: float, steps: int = 10) -> float:
    """Max |evolve(shift(rho)) - shift(evolve(rho))| for a shift commensurate with the grid."""
    cells = shift / rho.dx
    if abs(cells - round(cells)) > 1e-9:
        raise ValueError(f"shift {shift} is not a multiple of the grid spacing {rho.dx}")
    cells = int(round(cells))
    a = evolve_grid(shift_cells(rho, cells), coeff, dt, steps, monitor_every=0).rho.rho
    b = shift_cells(evolve_grid(rho, coeff, dt, steps, monitor_every=0).rho, cells).rho
    return float(np.max(np.abs(a - b)))


def write_matrix_text(path, rho: GridDensityMatrix, t: float) -> None:
    """Plain-text snapshot: header line, then one row per matrix row of re/im pairs."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"# t={t:.16e} n={rho.n}\n")
        for row in rho.rho:
            pairs = np.column_stack([row.real, row.imag]).ravel()
            fh.write(" ".join(f"{v:.16e}" for v in pairs) + "\n")
