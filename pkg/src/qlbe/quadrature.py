"""Adaptive quadrature with an explicit error contract.

Thin layer over QUADPACK (``scipy.integrate.quad``, Gauss-Kronrod 21-point
panels with adaptive bisection) that turns an error estimate above the
requested tolerance into an exception instead of a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    def __init__(self, message: str, value: float, error: float):
        super().__init__(f"{message} (value={value:.6e}, error estimate={error:.3e})")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    limit: int = 400

    def __post_init__(self):
        if not (self.abs_tol >= 0 and self.rel_tol >= 0 and self.abs_tol + self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be >= 0 and not both zero")
        if self.limit < 1:
            raise ValueError("quadrature limit must be >= 1")

    def accepts(self, value: float, error: float) -> bool:
        return error <= max(self.abs_tol, self.rel_tol * abs(value))


def integrate_1d(f, a: float, b: float, quad: QuadratureSpec = QuadratureSpec(),
                 points=None, what: str = "integral") -> tuple[float, float]:
    """Integrate f over [a, b]; return (value, error estimate).

    The estimate is checked against ``quad`` with a safety factor of 10 since
    QUADPACK's estimates are deliberately pessimistic.
    """
    if a == b:
        return 0.0, 0.0
    kwargs = dict(epsabs=quad.abs_tol, epsrel=quad.rel_tol, limit=quad.limit)
    if points is not None:
        pts = [p for p in np.atleast_1d(points) if a < p < b]
        if pts:
            kwargs["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, error = integrate.quad(f, a, b, **kwargs)
    if not np.isfinite(value) or error > 10 * max(quad.abs_tol, quad.rel_tol * abs(value)):
        raise QuadratureError(f"{what} did not converge on [{a}, {b}]", value, error)
    return value, error
