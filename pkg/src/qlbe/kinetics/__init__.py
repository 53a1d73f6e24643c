"""Quantum linear Boltzmann dynamics: collision kernel, jump Monte Carlo, band solver."""

from .bands import (
    BandKernel1D, BandState, MomentumGrid1D, StabilityError, band_evolve, band_kernel_build,
    bands_from_matrix, covariance_test, gillespie_1d, matrix_from_bands, maxwell_band,
    poisson_band_generator, stationarity_residual, translate_bands,
)
from .kernel import CollisionKernel, RateOverflowError, kernel_build, mean_free_time
from .montecarlo import (
    DiagonalEnsemble, maxwell_momenta, mc_evolve, splitmix64, trajectory_rng, trajectory_seed,
)

__all__ = [
    "BandKernel1D", "BandState", "CollisionKernel", "DiagonalEnsemble", "MomentumGrid1D",
    "RateOverflowError", "StabilityError", "band_evolve", "band_kernel_build",
    "bands_from_matrix", "covariance_test", "gillespie_1d", "kernel_build",
    "matrix_from_bands", "maxwell_band", "maxwell_momenta", "mc_evolve", "mean_free_time",
    "poisson_band_generator", "splitmix64", "stationarity_residual", "trajectory_rng",
    "trajectory_seed", "translate_bands",
]
