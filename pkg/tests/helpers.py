"""Shared, cached test data.  Every expensive object is built once per session."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from mfident.config import example_config
from mfident.experiment import Pipeline
from mfident.grid import SpaceGrid, SpaceTimeField, TimeGrid
from mfident.initial import InitialDistribution

EXAMPLE_NAMES = ("cubic", "opinion_dynamics", "attraction_repulsion")


@lru_cache(maxsize=None)
def pipeline(name: str) -> Pipeline:
    return Pipeline(example_config(name), out_dir=None)


@lru_cache(maxsize=None)
def system(name: str, n: int):
    return pipeline(name).system_for(n)


def uniform_field(nx=100, nt=4, lo=0.0, hi=1.0) -> SpaceTimeField:
    """Uniform density on ``[lo, hi]`` held fixed in time (grid equals the interval)."""
    g = SpaceGrid(lo, hi, nx)
    return SpaceTimeField.stationary(g, TimeGrid(1.0, nt), np.full(nx + 1, 1.0 / (hi - lo)))


def gaussian_field(nu, half_width, nx, nt) -> SpaceTimeField:
    g = SpaceGrid(-half_width, half_width, nx)
    prof = InitialDistribution.parse(f"normal:0,{float(np.sqrt(nu))!r}").on_grid(g)
    return SpaceTimeField.stationary(g, TimeGrid(1.0, nt), prof)


def rel_gap(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@lru_cache(maxsize=None)
def kernels(name: str) -> dict:
    """``rho`` (both forms) and the four kernel matrices of one example."""
    from mfident.measures import assemble_F, assemble_G, compute_rho_general, fold, weight_kernel

    u = pipeline(name).data
    rho_gen = compute_rho_general(u)
    rho_rad = fold(rho_gen)
    F = assemble_F(u)
    G = assemble_G(u)
    return {"rho_general": rho_gen, "rho_radial": rho_rad, "F_bar": F, "G_bar": G,
            "Q_bar": weight_kernel(F, rho_gen), "R_bar": weight_kernel(G, rho_rad)}
