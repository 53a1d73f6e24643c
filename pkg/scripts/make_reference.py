"""Regenerate the committed friction regression value.

The reference scenario (Gaussian potential g = r = 1, m = beta = n = hbar = 1,
M = 100) is evaluated by adaptive quadrature and by a 10^6-point trapezoid
rule; the value is written only if the two agree to 1e-8 relative.

    python scripts/make_reference.py [output.json]
"""

import json
import sys
from datetime import date
from pathlib import Path

import numpy as np
import scipy

from qlbe import __version__
from qlbe.friction import eta, eta_gaussian_closed_form, eta_trapezoid
from qlbe.physcore import GasSpec, GaussianPotential, ParticleSpec, UnitSystem

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "qlbe" / "data" / "friction_reference.json"


def main(out=DEFAULT_OUT):
    gas = GasSpec(mass=1.0, beta=1.0, density=1.0)
    particle = ParticleSpec(mass=100.0)
    potential = GaussianPotential(g=1.0, r=1.0)
    units = UnitSystem(hbar=1.0)

    report = eta(gas, particle, potential, units)
    trap = eta_trapezoid(gas, particle, potential, units, n_points=1_000_001)
    closed = eta_gaussian_closed_form(gas, particle, 1.0, 1.0, units)
    rel = abs(report.eta - trap) / report.eta
    if rel > 1e-8:
        raise SystemExit(f"quadratures disagree: adaptive {report.eta!r}, trapezoid {trap!r}")

    payload = {
        "scenario": {
            "gas": {"mass": 1.0, "beta": 1.0, "density": 1.0},
            "particle": {"mass": 100.0},
            "potential": {"kind": "gaussian", "g": 1.0, "r": 1.0},
            "units": {"hbar": 1.0},
        },
        "eta": report.eta,
        "provenance": {
            "adaptive_quadrature": report.eta,
            "adaptive_error_estimate": report.error_estimate,
            "trapezoid_1e6": trap,
            "relative_agreement": rel,
            "gaussian_closed_form": closed,
            "q_max": report.q_max,
            "generator": "scripts/make_reference.py",
            "qlbe_version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "date": date.today().isoformat(),
        },
    }
    Path(out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"eta = {report.eta!r} (trapezoid {trap!r}, rel {rel:.2e}) -> {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
