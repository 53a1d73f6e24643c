"""``qlbe-sim``: run one scenario from a config file and write CSV/JSON artifacts.

    qlbe-sim <scenario> --config <path> [--out <dir>] [--seed <u64>]

Every scenario writes ``<scenario>.csv`` (plus scenario-specific extras) and
finally ``summary.json`` with the list of invariant checks.  The exit code is
0 iff every check passed, 1 if some check failed and 2 on configuration or
runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import brownian, friction, kinetics
from .config import SCENARIOS, ConfigError, RunConfig, parse_config
from .physcore import is_zero_potential
from .structure_factor import (
    MBExact, MBLimit, detailed_balance_residual, fdt_phi, total_cross_section, zeroth_moment,
)

FLOAT_FMT = "{:.16e}"


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def as_dict(self):
        return {"name": self.name, "value": _json_float(self.value), "tolerance": self.tolerance,
                "pass": bool(self.passed)}


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def below(name, value, tol):
    return Check(name, float(value), tol, bool(value < tol))


def at_least(name, value, tol):
    return Check(name, float(value), tol, bool(value >= tol))


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FLOAT_FMT.format(float(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# scenarios: each returns (results, checks)
# ---------------------------------------------------------------------------

def run_dsf(cfg: RunConfig, out: Path):
    gas = cfg.gas
    variants = {"exact": MBExact(gas), "limit": MBLimit(gas)}
    if cfg["dsf.variant"] != "both":
        variants = {cfg["dsf.variant"]: variants[cfg["dsf.variant"]]}
    qs, Es = np.asarray(cfg["dsf.q"]), np.asarray(cfg["dsf.E"])
    if np.any(qs <= 0):
        raise ValueError("dsf.q values must be > 0")
    rows, checks = [], []
    min_value = math.inf
    for name, S in variants.items():
        vals = S.value(qs[:, None], Es[None, :])
        min_value = min(min_value, float(vals.min()))
        rows += [(q, E, vals[i, j], name) for i, q in enumerate(qs) for j, E in enumerate(Es)]
        qvec = qs[:, None, None] * np.array([1.0, 0.0, 0.0])
        res = np.abs(detailed_balance_residual(S, qvec, Es[None, :]))
        checks.append(below(f"detailed_balance_{name}", res.max(), 1e-12))
    checks.append(Check("positivity", min_value, 0.0, min_value > 0))
    if "exact" in variants:
        dev = max(abs(zeroth_moment(variants["exact"], q, cfg.quad) - 1.0) for q in qs)
        checks.append(below("zeroth_moment", dev, 1e-8))
    write_csv(out / "dsf.csv", ["q", "E", "value", "variant"], rows)
    return {"points": len(rows)}, checks


def run_fdt(cfg: RunConfig, out: Path):
    S = MBExact(cfg.gas)
    rows = []
    cross, minus0, plus0 = 0.0, 0.0, math.inf
    for q in cfg["fdt.q"]:
        for t in cfg["fdt.t"]:
            m1, p1, _ = fdt_phi(S, q, t, cfg.quad, cfg.units, form="structure")
            m2, p2, _ = fdt_phi(S, q, t, cfg.quad, cfg.units, form="response")
            rows += [(q, t, m1, "phi_minus"), (q, t, p1, "phi_plus"),
                     (q, t, m2, "phi_minus_response"), (q, t, p2, "phi_plus_response")]
            cross = max(cross, abs(m1 - m2), abs(p1 - p2))
            if t == 0:
                minus0 = max(minus0, abs(m1))
                plus0 = min(plus0, p1)
    checks = [below("fdt_cross_form", cross, 1e-8)]
    if math.isfinite(plus0):
        checks.append(below("phi_minus_at_t0", minus0, 1e-10))
        checks.append(Check("phi_plus_at_t0_positive", plus0, 0.0, plus0 > 0))
    write_csv(out / "fdt.csv", ["q", "t", "value", "variant"], rows)
    return {"max_cross_form_difference": cross}, checks


def run_xsec(cfg: RunConfig, out: Path):
    gas, particle, pot, units = cfg.gas, cfg.particle, cfg.potential, cfg.units
    kernel = kinetics.kernel_build(gas, particle, pot, "exact", units)
    S = MBExact(gas)
    rows, worst = [], 0.0
    for pmag in cfg["xsec.p"]:
        p = np.array([pmag, 0.0, 0.0])
        tcs = total_cross_section(pot, S, p, particle.mass, gas, units)
        direct = kernel.rate(p) / 2
        rel = abs(tcs.loss_rate - direct) / direct if direct else abs(tcs.loss_rate)
        worst = max(worst, rel)
        rows.append((pmag, tcs.sigma, tcs.loss_rate, direct, rel))
    write_csv(out / "xsec.csv", ["p", "sigma", "loss_rate", "direct_loss", "rel_diff"], rows)
    checks = [below("loss_term_identity", worst, 1e-6)]
    if not is_zero_potential(pot):
        smin = min(r[1] for r in rows)
        checks.append(Check("sigma_positive", smin, 0.0, smin > 0))
    return {"max_rel_diff": worst}, checks


def _initial_momenta(cfg: RunConfig, n: int):
    M, beta = cfg.particle.mass, cfg.gas.beta
    if cfg["kinetic.initial"] == "maxwell":
        return kinetics.maxwell_momenta(M, beta, n, cfg.seed)
    return np.broadcast_to(np.asarray(cfg["kinetic.p0"]), (n, 3)).copy()


def run_kinetic(cfg: RunConfig, out: Path):
    gas, particle, pot, units = cfg.gas, cfg.particle, cfg.potential, cfg.units
    kernel = kinetics.kernel_build(gas, particle, pot, cfg["kinetic.variant"], units)
    T, n = cfg["kinetic.T"], cfg["kinetic.n_traj"]
    p0 = _initial_momenta(cfg, n)
    times = np.linspace(0.0, T, max(cfg["kinetic.samples"], 2))
    ens = kinetics.mc_evolve(kernel, p0, T, n, cfg.seed, sample_times=times)

    n_paths = min(cfg["kinetic.paths"], n)
    rows = []
    if n_paths:
        sub = kinetics.mc_evolve(kernel, p0[:n_paths], T, n_paths, cfg.seed, sample_times=times,
                                 keep_paths=True)
        for i, path in enumerate(sub.paths):
            rows += [(*row, i) for row in path]
    write_csv(out / "kinetic.csv", ["t", "px", "py", "pz", "traj_id"], rows)

    px = ens.final[:, 0]
    counts, edges = np.histogram(px, bins=cfg["kinetic.bins"])
    width = np.diff(edges)
    sd = math.sqrt(particle.mass / gas.beta)
    centre = 0.5 * (edges[1:] + edges[:-1])
    maxwell = np.exp(-0.5 * (centre / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    write_csv(out / "kinetic_histogram.csv", ["px_lo", "px_hi", "count", "density", "maxwell"],
              zip(edges[:-1], edges[1:], counts, counts / (n * width), maxwell))

    mean = ens.mean_momentum()
    write_csv(out / "kinetic_mean.csv", ["t", "mean_px", "mean_py", "mean_pz"],
              ((t, *m) for t, m in zip(times, mean)))

    checks = [
        Check("trajectory_count", ens.n_traj, n, ens.n_traj == n and ens.snapshots.shape[0] == n),
        Check("momenta_finite", float(np.all(np.isfinite(ens.snapshots))), 1.0,
              bool(np.all(np.isfinite(ens.snapshots)))),
    ]
    results = {"n_traj": n, "mean_jumps": float(ens.n_jumps.mean()),
               "final_mean_momentum": [float(v) for v in mean[-1]]}
    if cfg["kinetic.initial"] == "maxwell":
        ks = stats.kstest(px, "norm", args=(0.0, sd)).statistic
        results["ks_distance"] = float(ks)
        checks.append(below("maxwell_stationarity_ks", ks, 3 / math.sqrt(n)))

    if cfg["band.count"]:
        res, band_checks = _run_bands(cfg, out)
        results.update(res)
        checks += band_checks
    return results, checks


def _run_bands(cfg: RunConfig, out: Path):
    gas, particle, pot, units = cfg.gas, cfg.particle, cfg.potential, cfg.units
    sd = math.sqrt(particle.mass / gas.beta)
    p_max = cfg.get("band.p_max", 5 * sd)
    grid = kinetics.MomentumGrid1D(-p_max, p_max, cfg["band.count"])
    kernel = kinetics.band_kernel_build(grid, gas, particle, pot, cfg["kinetic.variant"], units)
    offsets = sorted(set(cfg["band.offsets"]) | {0})
    if any(abs(k) >= grid.count for k in offsets):
        raise ValueError("band.offsets must be smaller than band.count in magnitude")
    dt = cfg.get("band.dt", 0.05 / max(kernel.max_rate(offsets), 1e-300))
    steps, every = cfg["band.steps"], max(cfg["band.snapshot_every"], 1)

    # pure Gaussian wave packet in momentum space
    width = cfg.get("band.width", sd / 2)
    psi = np.exp(-((grid.points - cfg["band.center"]) / (2 * width)) ** 2)
    psi /= np.linalg.norm(psi)
    bands = kinetics.bands_from_matrix(grid, np.outer(psi, psi.conj()), offsets)

    final, snaps = kinetics.band_evolve(bands, kernel, dt, steps, snapshot_every=1)
    rows = [(p, v.real, v.imag, kappa * grid.spacing, t)
            for (t, kappa, vals) in snaps
            if round(t / dt) % every == 0 or round(t / dt) == steps
            for p, v in zip(grid.points, vals)]
    write_csv(out / "kinetic_bands.csv", ["p", "re", "im", "k", "t"], rows)

    diag = [vals for (t, kappa, vals) in snaps if kappa == 0]
    traces = np.array([v.real.sum() for v in diag])
    drift = float(np.max(np.abs(traces - traces[0])))
    T_band = steps * dt
    min_diag = float(min(v.real.min() for v in diag))
    mono = 0.0
    for kappa in offsets:
        if kappa == 0:
            continue
        l1 = np.array([np.abs(v).sum() for (t, k, v) in snaps if k == kappa])
        mono = max(mono, float(np.max(np.diff(l1), initial=0.0)))
    checks = [
        below("band_trace_drift_per_time", drift / max(T_band, 1.0), 1e-8),
        at_least("band_diagonal_positivity", min_diag, -1e-12),
        below("band_l1_increase", mono, 1e-10),
        below("band_maxwell_stationarity", kinetics.stationarity_residual(kernel), 1e-6),
    ]
    return {"band_dt": dt, "band_steps": steps, "band_trace_drift": drift}, checks


def _brownian_eta(cfg: RunConfig) -> float:
    eta = cfg.get("brownian.eta")
    if eta is None:
        eta = friction.eta(cfg.gas, cfg.particle, cfg.potential, cfg.units, cfg.quad).eta
    return eta


def run_brownian(cfg: RunConfig, out: Path):
    M, beta, units = cfg.particle.mass, cfg.gas.beta, cfg.units
    eta = _brownian_eta(cfg)
    coeff = brownian.coefficients(eta, M, beta, units)
    st = brownian.GaussianState1D(*cfg["brownian.initial"]).check(units.hbar)
    x = brownian.position_grid(cfg["grid.length"], cfg["grid.n"])
    rho = brownian.gaussian_density_matrix(st, x, units)
    T = cfg.get("brownian.T", 5.0 / eta if eta > 0 else 1.0)
    dt = cfg.get("brownian.dt", brownian.suggest_dt(rho, coeff))
    steps = max(int(math.ceil(T / dt - 1e-9)), 1)
    dt = T / steps
    matrix_every = cfg["brownian.matrix_every"]
    ev = brownian.evolve_grid(rho, coeff, dt, steps, record_every=cfg["brownian.record_every"],
                              snapshot_every=matrix_every)
    write_csv(out / "brownian.csv",
              ["t", "mean_x", "mean_p", "var_x", "var_p", "cov_xp", "min_eig"], ev.moments)
    exact_rows = []
    for t in ev.moments[:, 0]:
        m = brownian.evolve_moments(st, coeff, t)
        exact_rows.append((t, m.mean_x, m.mean_p, m.var_x, m.var_p, m.cov_xp))
    exact_rows = np.asarray(exact_rows)
    write_csv(out / "brownian_exact.csv", ["t", "mean_x", "mean_p", "var_x", "var_p", "cov_xp"],
              exact_rows)
    if matrix_every:
        path = out / "brownian_matrix.txt"
        path.write_text("", encoding="utf-8")
        for t, R in ev.snapshots:
            brownian.write_matrix_text(path, brownian.GridDensityMatrix(x, R), t)

    spreads = coeff.spreads
    scale = np.array([spreads.dx_th, spreads.dp_th, spreads.dx_th ** 2, spreads.dp_th ** 2,
                      spreads.dx_th * spreads.dp_th])
    horizon = 2.0 / eta if eta > 0 else T
    sel = ev.moments[:, 0] <= horizon + 1e-12
    diff = np.abs(ev.moments[sel, 1:6] - exact_rows[sel, 1:6])
    ref = np.maximum(np.abs(exact_rows[sel, 1:6]), scale)
    cross = float(np.max(diff / ref))
    final = ev.moments[-1]
    checks = [
        below("trace_drift", abs(ev.rho.trace() - rho.trace()), 1e-8),
        below("hermiticity", ev.rho.hermiticity_error(), 1e-12),
        at_least("min_eigenvalue", ev.min_eig, -1e-7),
        Check("not_aborted", float(ev.aborted), 0.0, not ev.aborted),
        below("cross_solver_moments", cross, 1e-4),
        below("diffusion_product",
              abs(coeff.D_pp * coeff.D_xx - (units.hbar * eta / 4) ** 2)
              / max((units.hbar * eta / 4) ** 2, 1e-300), 1e-14),
        below("minimum_uncertainty", abs(spreads.dp_th * spreads.dx_th - units.hbar / 2)
              / (units.hbar / 2), 1e-15),
    ]
    if eta > 0 and eta * T >= 4.0:
        checks.append(below("stationary_var_p", abs(final[4] - M / beta) / (M / beta), 1e-3))
    results = {"eta": eta, "D_pp": coeff.D_pp, "D_xx": coeff.D_xx, "dt": dt, "steps": steps,
               "final_var_p": float(final[4]), "min_eig": ev.min_eig}
    return results, checks


def run_friction(cfg: RunConfig, out: Path):
    gas, particle, pot, units = cfg.gas, cfg.particle, cfg.potential, cfg.units
    report = friction.eta(gas, particle, pot, units, n_samples=cfg["friction.samples"])
    samples_path = out / "friction.csv"
    write_csv(samples_path, ["q", "integrand"], report.samples)
    checks = []
    results = {"eta": report.eta, "error_estimate": report.error_estimate, "q_max": report.q_max}
    if report.eta > 0:
        trap = friction.eta_trapezoid(gas, particle, pot, units)
        checks.append(below("dual_quadrature", abs(trap - report.eta) / report.eta, 1e-8))
        checks.append(below("error_estimate", report.error_estimate / report.eta, 1e-10))
        results["eta_trapezoid"] = trap
    else:
        checks.append(Check("zero_potential_eta", report.eta, 0.0, report.eta == 0))
    checks.append(below("gradient_form_residual",
                        friction.eta_gradient_form_residual(gas, particle, pot, units), 1e-10))
    if friction.matches_reference(gas, particle, pot, units):
        ref = friction.load_reference()["eta"]
        results["reference_eta"] = ref
        checks.append(below("regression", abs(report.eta - ref) / ref, 1e-8))
    n_mc = cfg["friction.mc_traj"]
    if n_mc > 0 and report.eta > 0:
        kernel = kinetics.kernel_build(gas, particle, pot, "brownian_limit", units)
        T = 2.0 / report.eta
        p0 = cfg["friction.mc_p0"] * math.sqrt(particle.mass / gas.beta)
        ens = kinetics.mc_evolve(kernel, [p0, 0.0, 0.0], T, n_mc, cfg.seed,
                                 sample_times=np.linspace(0.0, T, 41))
        dev = friction.compare_with_mc(report, ens)
        results.update(mc_rate=report.mc_rate, mc_deviation=dev)
        checks.append(below("mc_relaxation", dev, 0.10))
    (out / "friction.json").write_text(json.dumps({
        "eta": report.eta, "error_estimate": report.error_estimate, "q_max": report.q_max,
        "samples_path": samples_path.name}, indent=2) + "\n", encoding="utf-8")
    return results, checks


def run_covariance(cfg: RunConfig, out: Path):
    gas, particle, pot, units = cfg.gas, cfg.particle, cfg.potential, cfg.units
    shift, steps = cfg["covariance.shift"], cfg["covariance.steps"]
    rng = np.random.default_rng(0 if cfg.seed is None else cfg.seed)
    sd = math.sqrt(particle.mass / gas.beta)
    grid = kinetics.MomentumGrid1D(-4 * sd, 4 * sd, cfg.get("band.count") or 32)
    kernel = kinetics.band_kernel_build(grid, gas, particle, pot, "exact", units)
    n = grid.count
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = A @ A.conj().T
    rho /= np.trace(rho).real
    offsets = [0, 1, 3, -2]
    bands = kinetics.bands_from_matrix(grid, rho, offsets)
    dt = 0.05 / max(kernel.max_rate(offsets), 1e-300)

    r0 = kinetics.covariance_test(kernel, bands[0], shift, dt, steps)
    r1 = kinetics.covariance_test(kernel, bands[1], shift, dt, steps)
    rm = kinetics.covariance_test(kernel, bands, shift, dt, steps)

    coeff = brownian.coefficients(_brownian_eta(cfg), particle.mass, gas.beta, units)
    x = brownian.position_grid(cfg["grid.length"], cfg["grid.n"])
    st = brownian.GaussianState1D(0.0, 0.0, 1.0, units.hbar ** 2)
    grho = brownian.gaussian_density_matrix(st, x, units)
    g_dt = brownian.suggest_dt(grho, coeff)
    cell = grho.dx
    rg = brownian.translation_covariance_grid(coeff, grho, cell, g_dt, steps)

    rows = [("band_k0", shift, r0, 0.0), ("band_single", shift, r1, 1e-12),
            ("band_multi", shift, rm, 1e-10), ("grid_one_cell", cell, rg, 1e-8)]
    write_csv(out / "covariance.csv", ["test", "shift", "residual", "tolerance"], rows)
    checks = [Check("band_k0", r0, 0.0, r0 == 0.0), below("band_single", r1, 1e-12),
              below("band_multi", rm, 1e-10), below("grid_one_cell", rg, 1e-8)]
    return {"residuals": {r[0]: r[2] for r in rows}}, checks


RUNNERS = {
    "dsf": run_dsf, "fdt": run_fdt, "xsec": run_xsec, "kinetic": run_kinetic,
    "brownian": run_brownian, "friction": run_friction, "covariance": run_covariance,
}


def run(cfg: RunConfig, out_dir) -> dict:
    """Execute one scenario, write its files and finally ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        results, checks = RUNNERS[cfg.scenario](cfg, out)
    except Exception as exc:
        raise RuntimeError(f"scenario {cfg.scenario!r} failed: {exc}") from exc
    names = [c.name for c in checks]
    if len(names) != len(set(names)):
        raise RuntimeError("duplicate check names in summary")
    summary = {
        "scenario": cfg.scenario,
        "input_digest": cfg.digest(),
        "seed": cfg.seed,
        "results": results,
        "checks": [c.as_dict() for c in checks],
        "passed": all(c.passed for c in checks),
        "wall_time_s": time.perf_counter() - start,
    }
    tmp = out / "summary.json.tmp"
    tmp.write_text(json.dumps(summary, indent=2, default=_json_default) + "\n", encoding="utf-8")
    os.replace(tmp, out / "summary.json")
    return summary


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlbe-sim", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True, type=Path, help="flat key = value config file")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    ap.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("qlbe-sim: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, scenario=args.scenario, seed=args.seed)
    except (OSError, ConfigError) as exc:
        print(f"qlbe-sim: {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(cfg, args.out)
    except RuntimeError as exc:
        print(f"qlbe-sim: {exc}", file=sys.stderr)
        return 2
    for c in summary["checks"]:
        flag = "PASS" if c["pass"] else "FAIL"
        print(f"{flag} {c['name']}: {c['value']} (tol {c['tolerance']})")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
