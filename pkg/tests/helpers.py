"""Shared oracles for the test-suite."""

import math

import numpy as np
from scipy import stats

from qlbe.physcore import potential_ft


def jump_density(kernel, q, c, pmag):
    """Jump intensity per unit |q| and unit cos(theta) at momentum |p| along the polar axis."""
    t = potential_ft(kernel.potential, q, kernel.units)
    E = (2 * pmag * q * c + q * q) / (2 * kernel.particle.mass)
    return 2 * math.pi * kernel.prefactor * q * q * t * t * kernel.structure.value(q, E)


def binned_target(kernel, pmag, q_edges, c_edges, order=24):
    """Integral of the jump density over each (|q|, cos) bin, by tensor Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    out = np.zeros((len(q_edges) - 1, len(c_edges) - 1))
    for i, (qa, qb) in enumerate(zip(q_edges[:-1], q_edges[1:])):
        qn = 0.5 * (qb - qa) * x + 0.5 * (qb + qa)
        wq = 0.5 * (qb - qa) * w
        for j, (ca, cb) in enumerate(zip(c_edges[:-1], c_edges[1:])):
            cn = 0.5 * (cb - ca) * x + 0.5 * (cb + ca)
            wc = 0.5 * (cb - ca) * w
            f = jump_density(kernel, qn[:, None], cn[None, :], pmag)
            out[i, j] = wq @ f @ wc
    return out


def sampler_chi_square(kernel, p, n_draws, seed, q_bins=10, c_bins=8):
    """Chi-square test of kernel.sample at momentum p over (|q|, cos theta) bins.

    Returns (p_value, mass_check) where mass_check is the binned target mass
    divided by the quadrature loss rate (should be 1).
    """
    p = np.asarray(p, dtype=float)
    pmag = float(np.linalg.norm(p))
    axis = p / pmag
    rng = np.random.default_rng(seed)
    q = kernel.sample(p, n_draws, rng)
    qmag = np.linalg.norm(q, axis=1)
    cos = (q @ axis) / qmag

    q_hi = float(np.quantile(qmag, 0.999)) * 1.5
    q_edges = np.quantile(qmag, np.linspace(0, 1, q_bins + 1))
    q_edges[0], q_edges[-1] = 0.0, q_hi
    c_edges = np.linspace(-1, 1, c_bins + 1)
    target = binned_target(kernel, pmag, q_edges, c_edges)
    rate = kernel.rate(p)
    tail = rate - target.sum()
    observed, _, _ = np.histogram2d(qmag, cos, bins=[q_edges, c_edges])
    expected = target.ravel() / rate * n_draws
    obs = observed.ravel()
    # pool sparse cells and the tail beyond q_hi so every expected count is >= 5
    sparse = expected < 5
    exp_cells = np.append(expected[~sparse], expected[sparse].sum() + tail / rate * n_draws)
    obs_cells = np.append(obs[~sparse], obs[sparse].sum() + np.sum(qmag > q_hi))
    if exp_cells[-1] < 5:
        exp_cells[-2] += exp_cells[-1]
        obs_cells[-2] += obs_cells[-1]
        exp_cells, obs_cells = exp_cells[:-1], obs_cells[:-1]
    exp_cells *= obs_cells.sum() / exp_cells.sum()
    p_value = stats.chisquare(obs_cells, exp_cells).pvalue
    return float(p_value), float(target.sum() / rate)
