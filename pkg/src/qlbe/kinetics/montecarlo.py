"""Pure-jump Monte Carlo for the momentum-diagonal collision dynamics.

Each trajectory is simulated exactly by thinning: candidate collisions arrive
at rate ``candidate_rate * bound_factor(|p|)`` (constant between jumps since
the state only changes at jumps), candidate transfers are drawn from the
kernel envelope and accepted with the kernel's acceptance probability.

Every candidate consumes exactly five uniforms from the trajectory's own
stream (wait, radius, cos, phi, accept).  Trajectories are therefore advanced
in lockstep, vectorised across the ensemble, while each one stays
bit-reproducible regardless of chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel import CollisionKernel, RateOverflowError

_MASK64 = (1 << 64) - 1
_UNIFORMS_PER_CANDIDATE = 5
_BLOCK = 256
# abort if a single trajectory would need more candidates than this
_MAX_CANDIDATES = 50_000_000


def splitmix64(x: int) -> int:
    """SplitMix64 finaliser (Steele, Lea & Flood 2014)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trajectory_seed(seed: int, index: int) -> int:
    """Per-trajectory 64-bit seed: splitmix64(splitmix64(seed) xor index)."""
    return splitmix64(splitmix64(seed & _MASK64) ^ (index & _MASK64))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trajectory_seed(seed, index)))


@dataclass
class DiagonalEnsemble:
    """Monte Carlo ensemble of momentum trajectories.

    ``snapshots[i, k]`` is the momentum of trajectory i at ``sample_times[k]``.
    ``paths`` (only when requested) holds per trajectory an array of rows
    ``(t, px, py, pz)`` starting with the initial state at t = 0.
    """

    seed: int
    horizon: float
    variant: str
    sample_times: np.ndarray
    snapshots: np.ndarray
    final: np.ndarray
    n_jumps: np.ndarray
    n_candidates: np.ndarray
    paths: list | None = field(default=None, repr=False)

    @property
    def n_traj(self) -> int:
        return self.final.shape[0]

    def mean_momentum(self):
        return self.snapshots.mean(axis=0)


def _run_chunk(kernel: CollisionKernel, p0: np.ndarray, indices: np.ndarray, seed: int,
               T: float, sample_times: np.ndarray, keep_paths: bool):
    n = len(indices)
    K = len(sample_times)
    times_ext = np.append(sample_times, np.inf)
    final = p0.copy()
    snaps = np.empty((n, K, 3))
    jumps = np.zeros(n, dtype=np.int64)
    cands = np.zeros(n, dtype=np.int64)
    paths = [[(0.0, *p0[i])] for i in range(n)] if keep_paths else None
    gens = [trajectory_rng(seed, int(i)) for i in indices]

    lam0 = kernel.candidate_rate
    if lam0 > 0:
        expected = lam0 * float(np.max(kernel.bound_factor(np.linalg.norm(p0, axis=1)))) * T
        if not math.isfinite(expected) or expected > _MAX_CANDIDATES:
            raise RateOverflowError(
                f"expected {expected:.3g} candidate collisions per trajectory "
                f"(candidate rate {lam0:.3g}, horizon {T:.3g})")

    # compact working set of still-running trajectories
    ids = np.arange(n)
    p = p0.copy()
    t = np.zeros(n)
    nxt = np.zeros(n, dtype=int)
    t_next = times_ext[nxt]
    njump = np.zeros(n, dtype=np.int64)
    ncand = 0
    buf = None
    col = _BLOCK
    while lam0 > 0 and ids.size:
        if col == _BLOCK:
            buf = np.empty((_BLOCK, ids.size, _UNIFORMS_PER_CANDIDATE))
            for a, i in enumerate(ids):
                buf[:, a] = gens[i].random((_BLOCK, _UNIFORMS_PER_CANDIDATE))
            col = 0
        u = buf[col]
        col += 1
        ncand += 1

        pmag = np.sqrt(np.einsum("ij,ij->i", p, p))
        lam = lam0 * kernel.bound_factor(pmag)
        if not np.all(np.isfinite(lam)):
            raise RateOverflowError("candidate rate overflowed during evolution")
        t_new = t - np.log1p(-u[:, 0]) / lam

        due = t_next < t_new
        while due.any():
            rows = np.flatnonzero(due)
            snaps[ids[rows], nxt[rows]] = p[rows]
            nxt[rows] += 1
            t_next[rows] = times_ext[nxt[rows]]
            due[rows] = t_next[rows] < t_new[rows]

        q = kernel.candidates(u[:, 1:4])
        acc = (u[:, 4] < kernel.acceptance(q, p)) & (t_new < T)
        p[acc] += q[acc]
        njump[acc] += 1
        t = t_new
        if keep_paths:
            for a in np.flatnonzero(acc):
                paths[ids[a]].append((t[a], *p[a]))
        if not np.all(np.isfinite(p[acc])):
            raise RateOverflowError("non-finite momentum after a jump")

        done = t_new >= T
        if done.any():
            gone = ids[done]
            final[gone] = p[done]
            jumps[gone] = njump[done]
            cands[gone] = ncand
            keep = ~done
            ids, p, t, njump = ids[keep], p[keep], t[keep], njump[keep]
            nxt, t_next = nxt[keep], t_next[keep]
            buf = buf[:, keep]

    if lam0 <= 0:
        # zero kernel: nothing ever jumps
        snaps[:] = p0[:, None, :]
    if keep_paths:
        paths = [np.asarray(rows, dtype=float) for rows in paths]
    return final, snaps, jumps, cands, paths


def mc_evolve(kernel: CollisionKernel, initial, T: float, n_traj: int, seed: int,
              sample_times=None, keep_paths: bool = False, workers: int | None = None,
              chunk_size: int = 4096) -> DiagonalEnsemble:
    """Simulate ``n_traj`` jump trajectories up to time T.

    ``initial`` is a single momentum 3-vector or an (n_traj, 3) array.
    ``sample_times`` defaults to 51 equally spaced times on [0, T].
    ``workers`` defaults to the ``QLBE_THREADS`` environment variable (or 1).
    """
    if not T > 0:
        raise ValueError("horizon T must be > 0")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    initial = np.asarray(initial, dtype=float)
    if initial.shape == (3,):
        p0 = np.broadcast_to(initial, (n_traj, 3)).copy()
    elif initial.shape == (n_traj, 3):
        p0 = initial.copy()
    else:
        raise ValueError("initial must be a 3-vector or an (n_traj, 3) array")
    if sample_times is None:
        sample_times = np.linspace(0.0, T, 51)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < 0 or sample_times[-1] > T:
        raise ValueError("sample_times must be non-decreasing within [0, T]")
    if workers is None:
        workers = int(os.environ.get("QLBE_THREADS", "1") or 1)

    chunks = [np.arange(s, min(s + chunk_size, n_traj)) for s in range(0, n_traj, chunk_size)]

    def job(ix):
        return _run_chunk(kernel, p0[ix], ix, seed, T, sample_times, keep_paths)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(ix) for ix in chunks]

    final = np.concatenate([r[0] for r in results])
    snaps = np.concatenate([r[1] for r in results])
    jumps = np.concatenate([r[2] for r in results])
    cands = np.concatenate([r[3] for r in results])
    paths = sum((r[4] for r in results), []) if keep_paths else None
    return DiagonalEnsemble(seed, T, kernel.variant, sample_times, snaps, final, jumps, cands,
                            paths)


def maxwell_momenta(M: float, beta: float, n: int, seed: int) -> np.ndarray:
    """Draw n momenta from the Maxwell distribution of a particle of mass M."""
    rng = np.random.Generator(np.random.PCG64(splitmix64(seed ^ 0x6D617877656C6C)))
    return rng.normal(0.0, math.sqrt(M / beta), size=(n, 3))
