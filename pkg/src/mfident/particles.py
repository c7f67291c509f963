"""Euler-Maruyama simulation of the interacting particle system

    dX^i = (1/N) sum_j phi(|X^j - X^i|) sign(X^j - X^i) dt + sqrt(2 nu) dB^i,

used as an independent check on the mean-field solver.

Every particle draws from its own counter-based stream keyed by
``(seed, particle_id)``: first a uniform for the initial position, then one
normal per step.  Relabelling particles therefore relabels trajectories.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from . import backend
from .forward import DivergenceError
from .grid import InvalidInputError, SpaceGrid, TimeGrid
from .initial import InitialDistribution
from .interaction import InteractionKernel

PAIR_CUTOFF = 1e-8
_BLOCK_STEPS = 128


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray = field(repr=False)  # (nt + 1, N)
    n_particles: int
    nu: float
    seed: int
    times: TimeGrid
    particle_ids: np.ndarray = field(repr=False, default=None)

    def at(self, k: int) -> np.ndarray:
        return self.positions[k]


def _polynomial_drift(x, terms, hint=None):
    """Exact ``(1/N) sum_j phi(|x_j - x_i|) sign(x_j - x_i)`` for integer powers.

    Sorting turns the pair sum into prefix sums of powers, ``O(N log N)``.
    ``hint`` is a previous sort order; particles barely move per step, so
    timsort on the hinted order is close to linear.  Returns the drift and
    the order used.
    """
    n = x.size
    if hint is None:
        order = np.argsort(x, kind="stable")
    else:
        order = hint[np.argsort(x[hint], kind="stable")]
    xs = x[order]
    out = np.zeros(n)
    pmax = max(int(e) for _, e in terms)
    # powers[q] = xs**q; prefix sums exclude / include the current index
    powers = [np.ones(n)]
    for _ in range(pmax):
        powers.append(powers[-1] * xs)
    total = [p.sum() for p in powers]
    below = [np.cumsum(p) - p for p in powers]  # sum over j < i in sorted order
    for a, e in terms:
        p = int(e)
        if p == 0:
            # sign(0) = 0: count strictly larger minus strictly smaller
            lt = np.searchsorted(xs, xs, side="left")
            gt = n - np.searchsorted(xs, xs, side="right")
            out += a * (gt - lt)
            continue
        acc = np.zeros(n)
        for q in range(p + 1):
            above_q = total[q] - below[q] - powers[q]
            c = comb(p, q) * powers[p - q]
            # (x_j - x_i)^p over j above, (x_i - x_j)^p over j below
            acc += c * ((-1) ** (p - q) * above_q - (-1) ** q * below[q])
        out += a * acc
    res = np.empty(n)
    res[order] = out / n
    return res, order


def _drift_function(kernel: InteractionKernel):
    if kernel.is_tabulated:
        tr = np.asarray(kernel.table_r, dtype=float)
        tp = np.asarray(kernel.table_phi, dtype=float)
        return lambda x: backend.pairwise_drift_table(x, tr, tp, PAIR_CUTOFF)
    if not kernel.power_terms:
        return lambda x: np.zeros_like(x)
    if kernel.is_polynomial:
        state = {"order": None}

        def poly(x):
            res, state["order"] = _polynomial_drift(x, kernel.power_terms, state["order"])
            return res
        return poly
    coefs = np.array([a for a, _ in kernel.power_terms])
    exps = np.array([e for _, e in kernel.power_terms])
    return lambda x: backend.pairwise_drift_power(x, coefs, exps, PAIR_CUTOFF)


def particle_streams(seed: int, particle_ids) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(i),))))
            for i in particle_ids]


def simulate_particles(kernel: InteractionKernel, n_particles: int, nu: float, times: TimeGrid,
                       initial_sampler: InitialDistribution, seed: int, *,
                       particle_ids=None, initial_positions=None) -> ParticleEnsemble:
    """Euler-Maruyama on ``times``; returns positions at every time level.

    ``initial_positions`` overrides the draws from ``initial_sampler`` (the
    uniform draw is still consumed so the noise stays aligned).
    """
    n = int(n_particles)
    if n < 2 or n != n_particles:
        raise InvalidInputError(f"need an integer N >= 2, got {n_particles}")
    if nu < 0:
        raise InvalidInputError(f"nu must be nonnegative, got {nu}")
    ids = np.arange(n) if particle_ids is None else np.asarray(particle_ids, dtype=np.int64)
    if ids.shape != (n,) or np.unique(ids).size != n:
        raise InvalidInputError("particle_ids must be N distinct integers")
    streams = particle_streams(seed, ids)
    u0 = np.array([g.random() for g in streams])
    if initial_positions is None:
        x = np.asarray(initial_sampler.ppf(u0), dtype=float)
    else:
        x = np.array(initial_positions, dtype=float)
        if x.shape != (n,):
            raise InvalidInputError(f"initial_positions must have shape {(n,)}")
    drift = _drift_function(kernel)
    dt = times.dt
    amp = np.sqrt(2.0 * nu * dt)
    out = np.empty((times.nt + 1, n))
    out[0] = x
    for start in range(1, times.nt + 1, _BLOCK_STEPS):
        stop = min(start + _BLOCK_STEPS, times.nt + 1)
        noise = np.stack([g.standard_normal(stop - start) for g in streams], axis=1)
        for k in range(start, stop):
            # overflow shows up as non-finite positions, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + dt * drift(x) + amp * noise[k - start]
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite particle position at step {k} (t={k * dt:.4g})")
            out[k] = x
    return ParticleEnsemble(out, n, float(nu), int(seed), times, ids)


def empirical_density(positions, grid: SpaceGrid) -> np.ndarray:
    """Histogram on the dual cells of ``grid``, normalized to trapezoid mass 1."""
    x = np.asarray(positions, dtype=float).ravel()
    edges = np.concatenate([[grid.x_min], grid.nodes[:-1] + 0.5 * grid.dx, [grid.x_max]])
    counts, _ = np.histogram(x, bins=edges)
    inside = counts.sum()
    if inside == 0:
        raise InvalidInputError("no particle lies inside the grid")
    return counts / (inside * grid.weights)


def write_snapshots_csv(ens: ParticleEnsemble, path, every: int = 1) -> Path:
    path = Path(path)
    ids = ens.particle_ids if ens.particle_ids is not None else np.arange(ens.n_particles)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "particle_id", "x"])
        for k in range(0, ens.times.nt + 1, every):
            t = repr(float(ens.times.times[k]))
            for pid, xv in zip(ids, ens.positions[k]):
                w.writerow([t, int(pid), repr(float(xv))])
    return path


def read_snapshots_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(times, particle_ids, positions[time, particle])``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["t", "particle_id", "x"]:
            raise InvalidInputError(f"{path}: expected header t,particle_id,x")
        rows = [r for r in reader if r]
    t = np.array([float(r[0]) for r in rows])
    pid = np.array([int(r[1]) for r in rows])
    xv = np.array([float(r[2]) for r in rows])
    times = np.unique(t)
    ids = pid[: np.count_nonzero(t == times[0])]
    return times, ids, xv.reshape(times.size, ids.size)
