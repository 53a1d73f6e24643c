"""Flat ``key = value`` run configuration with a strict schema.

One assignment per line, ``#`` starts a comment.  Keys are dotted
(``gas.mass``, ``potential.kind``, ``kinetic.n_traj`` ...).  Lists are
comma separated.  Unknown keys, duplicates, malformed values and missing
required keys are reported with the offending line number.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .physcore import (
    GasSpec, GaussianPotential, ParticleSpec, SpecError, TabulatedPotential, UnitSystem, validate,
)
from .quadrature import QuadratureSpec

SCENARIOS = ("dsf", "fdt", "xsec", "kinetic", "brownian", "friction", "covariance")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _int(text):
    return int(text, 0)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true/false")


def _floats(text):
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(_int(t.strip()) for t in text.split(",") if t.strip())


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    parse.__name__ = "one of " + "|".join(options)
    return parse


# key -> (parser, default); a default of None means "no default"
SCHEMA = {
    "run.scenario": (_choice(*SCENARIOS), None),
    "run.seed": (_int, None),
    "units.hbar": (_float, 1.0),
    "gas.mass": (_float, None),
    "gas.beta": (_float, None),
    "gas.density": (_float, None),
    "particle.mass": (_float, None),
    "potential.kind": (_choice("gaussian", "tabulated"), "gaussian"),
    "potential.g": (_float, None),
    "potential.r": (_float, None),
    "potential.q": (_floats, None),
    "potential.values": (_floats, None),
    "quad.abs_tol": (_float, None),
    "quad.rel_tol": (_float, None),
    "quad.limit": (_int, None),
    # dsf
    "dsf.q": (_floats, (0.25, 0.5, 1.0, 2.0, 4.0)),
    "dsf.E": (_floats, (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)),
    "dsf.variant": (_choice("exact", "limit", "both"), "both"),
    # fdt
    "fdt.q": (_floats, (0.5, 1.0, 2.0)),
    "fdt.t": (_floats, (0.0, 0.5, 1.0, 2.0)),
    # xsec
    "xsec.p": (_floats, (0.5, 1.0, 3.0)),
    # kinetic
    "kinetic.variant": (_choice("exact", "brownian_limit"), "exact"),
    "kinetic.initial": (_choice("point", "maxwell"), "point"),
    "kinetic.p0": (_floats, (0.0, 0.0, 0.0)),
    "kinetic.T": (_float, None),
    "kinetic.n_traj": (_int, 1000),
    "kinetic.samples": (_int, 51),
    "kinetic.paths": (_int, 20),
    "kinetic.bins": (_int, 40),
    "band.count": (_int, 0),
    "band.p_max": (_float, None),
    "band.dt": (_float, None),
    "band.steps": (_int, 200),
    "band.snapshot_every": (_int, 50),
    "band.offsets": (_ints, (0, 2, 5)),
    "band.center": (_float, 0.0),
    "band.width": (_float, None),
    # brownian
    "brownian.eta": (_float, None),
    "brownian.initial": (_floats, (0.0, 0.0, 1.0, 4.0, 0.0)),
    "brownian.T": (_float, None),
    "brownian.dt": (_float, None),
    "brownian.record_every": (_int, 10),
    "brownian.matrix_every": (_int, 0),
    "grid.length": (_float, 24.0),
    "grid.n": (_int, 96),
    # friction
    "friction.samples": (_int, 201),
    "friction.mc_traj": (_int, 0),
    "friction.mc_p0": (_float, 10.0),
    # covariance
    "covariance.shift": (_float, 1.0),
    "covariance.steps": (_int, 10),
}

_NEEDS_PARTICLE = {"xsec", "kinetic", "brownian", "friction", "covariance"}
_NEEDS_POTENTIAL = {"xsec", "kinetic", "friction", "covariance"}


@dataclass
class RunConfig:
    scenario: str
    values: dict
    lines: dict = field(default_factory=dict, repr=False)
    seed: int | None = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def units(self) -> UnitSystem:
        return UnitSystem(self.values["units.hbar"])

    @property
    def gas(self) -> GasSpec:
        return GasSpec(self["gas.mass"], self["gas.beta"], self["gas.density"])

    @property
    def particle(self) -> ParticleSpec | None:
        m = self.values.get("particle.mass")
        return None if m is None else ParticleSpec(m)

    @property
    def potential(self):
        if self.values["potential.kind"] == "gaussian":
            g, r = self.values.get("potential.g"), self.values.get("potential.r")
            if g is None or r is None:
                return None
            return GaussianPotential(g, r)
        q, v = self.values.get("potential.q"), self.values.get("potential.values")
        if q is None or v is None:
            return None
        return TabulatedPotential(q, v)

    @property
    def quad(self) -> QuadratureSpec:
        base = QuadratureSpec()
        return QuadratureSpec(self.get("quad.abs_tol", base.abs_tol),
                              self.get("quad.rel_tol", base.rel_tol),
                              self.get("quad.limit", base.limit))

    def digest(self) -> str:
        """SHA-256 over the effective settings (defaults included) and seed."""
        h = hashlib.sha256()
        h.update(self.scenario.encode())
        for key in sorted(self.values):
            h.update(f"\n{key}={self.values[key]!r}".encode())
        h.update(f"\nseed={self.seed!r}".encode())
        return h.hexdigest()


def parse_config(text: str, scenario: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse and validate a configuration.

    ``scenario`` and ``seed`` (from the command line) take precedence over
    ``run.scenario`` / ``run.seed``; a conflicting ``run.scenario`` is an error.
    """
    raw, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})",
                              lineno, key)
        parser = SCHEMA[key][0]
        try:
            raw[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})", lineno, key) from None
        lines[key] = lineno

    values = {k: default for k, (_, default) in SCHEMA.items()}
    values.update(raw)

    file_scenario = raw.get("run.scenario")
    if scenario is None:
        scenario = file_scenario
    elif file_scenario is not None and file_scenario != scenario:
        raise ConfigError(f"run.scenario is {file_scenario!r} but {scenario!r} was requested",
                          lines["run.scenario"], "run.scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}")
    values["run.scenario"] = scenario
    if seed is None:
        seed = raw.get("run.seed")

    cfg = RunConfig(scenario, values, lines, seed)
    _check_required(cfg)
    return cfg


def _check_required(cfg: RunConfig) -> None:
    sc = cfg.scenario
    required = ["gas.mass", "gas.beta", "gas.density"]
    if sc in _NEEDS_PARTICLE:
        required.append("particle.mass")
    needs_potential = sc in _NEEDS_POTENTIAL or (sc == "brownian"
                                                 and cfg.values["brownian.eta"] is None)
    if needs_potential:
        if cfg["potential.kind"] == "gaussian":
            required += ["potential.g", "potential.r"]
        else:
            required += ["potential.q", "potential.values"]
    if sc == "kinetic":
        required.append("kinetic.T")
    for key in required:
        if cfg.values.get(key) is None:
            raise ConfigError(f"missing required key {key!r} for scenario {sc!r}", key=key)
    stochastic = sc == "kinetic" or (sc == "friction" and cfg["friction.mc_traj"] > 0)
    if stochastic and cfg.seed is None:
        raise ConfigError(f"scenario {sc!r} needs a seed (run.seed or --seed)", key="run.seed")

    specs = [("units", cfg.units), ("gas", cfg.gas)]
    if cfg.particle is not None:
        specs.append(("particle", cfg.particle))
    if needs_potential:
        specs.append(("potential", cfg.potential))
    for prefix, spec in specs:
        try:
            validate(spec)
        except SpecError as exc:
            key = _SPEC_KEYS.get(exc.field, prefix)
            raise ConfigError(str(exc), cfg.lines.get(key), key) from None
    try:
        cfg.quad
    except ValueError as exc:
        raise ConfigError(str(exc), key="quad") from None
    if len(cfg["kinetic.p0"]) != 3:
        raise ConfigError("kinetic.p0 needs three components", cfg.lines.get("kinetic.p0"),
                          "kinetic.p0")
    if len(cfg["brownian.initial"]) != 5:
        raise ConfigError("brownian.initial needs mean_x, mean_p, var_x, var_p, cov_xp",
                          cfg.lines.get("brownian.initial"), "brownian.initial")


_SPEC_KEYS = {
    "mass_m": "gas.mass", "inverse_temperature_beta": "gas.beta",
    "number_density_n": "gas.density", "mass_M": "particle.mass", "hbar": "units.hbar",
    "strength_g": "potential.g", "range_r": "potential.r", "q": "potential.q",
    "ordering": "potential.q", "samples": "potential.values", "values": "potential.values",
}
