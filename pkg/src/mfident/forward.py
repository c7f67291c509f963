"""Finite-volume solver for the 1-D mean-field equation

    du/dt = nu * u_xx + d/dx [ u (K*u) ],   K(x) = sign(x) phi(|x|),

with zero total flux through both ends of the domain.

Control volumes are centred on the grid nodes (half volumes at the ends), so
the discrete mass is exactly the trapezoid mass.  Each step is a Strang
splitting: half a drift step (SSP-RK2, van Leer MUSCL upwind flux), a full
Crank-Nicolson diffusion step, half a drift step.  Every sub-step is in flux
form, which telescopes and conserves mass to round-off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import backend
from .grid import InvalidInputError, SpaceGrid, SpaceTimeField, TimeGrid, discrete_convolution
from .initial import InitialDistribution
from .interaction import InteractionKernel, kernel_from_phi

log = logging.getLogger(__name__)


class CFLError(ValueError):
    """The explicit drift step violates ``dt * max|K*u| / dx <= 1``."""


class DivergenceError(ArithmeticError):
    """A solver produced non-finite or significantly negative values."""


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    grid: SpaceGrid
    times: TimeGrid
    initial_density: np.ndarray

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidInputError(f"nu must be positive, got {self.nu}")
        u0 = np.asarray(self.initial_density, dtype=float)
        if u0.shape != (self.grid.nx + 1,):
            raise InvalidInputError(f"initial density has shape {u0.shape}, "
                                    f"expected {(self.grid.nx + 1,)}")
        if not np.all(np.isfinite(u0)):
            raise InvalidInputError("initial density must be finite")
        if np.any(u0 < 0):
            raise InvalidInputError("initial density must be nonnegative")
        mass = u0 @ self.grid.weights
        if abs(mass - 1.0) > 1e-8:
            raise InvalidInputError(f"initial density has mass {mass}, expected 1")
        object.__setattr__(self, "initial_density", u0)

    @classmethod
    def from_distribution(cls, nu, grid, times, dist: InitialDistribution):
        return cls(nu, grid, times, dist.on_grid(grid))


class _Stepper:
    def __init__(self, kernel: InteractionKernel, config: SolverConfig):
        g = config.grid
        self.dx = g.dx
        self.w = g.weights
        self.dt = config.times.dt
        self.K = kernel_from_phi(kernel, g)
        n = g.nx + 1
        # banded (W -/+ dt/2 * D) for Crank-Nicolson, D the zero-flux Laplacian
        c = config.nu / self.dx
        lower = np.full(n, c)
        upper = np.full(n, c)
        diag = np.full(n, -2 * c)
        diag[0] = diag[-1] = -c
        h = 0.5 * self.dt
        ab = np.zeros((3, n))
        ab[0, 1:] = -h * upper[:-1]
        ab[1] = self.w - h * diag
        ab[2, :-1] = -h * lower[1:]
        self._lhs = ab
        self._diag = diag
        self._c = c
        self._h = h

    def velocity(self, u):
        return -discrete_convolution(self.K, u, self.dx)

    def drift_rate(self, u):
        v = self.velocity(u)
        vmax = np.max(np.abs(v))
        if self.dt * vmax > self.dx:
            raise CFLError(f"drift CFL violated: dt={self.dt:.3e} but max|K*u|={vmax:.3e} "
                           f"needs dt <= {self.dx / vmax:.3e}")
        flux = backend.muscl_flux(u, 0.5 * (v[:-1] + v[1:]))
        div = np.zeros_like(u)
        div[:-1] -= flux
        div[1:] += flux
        return div / self.w

    def drift_half(self, u):
        h = 0.5 * self.dt
        u1 = u + h * self.drift_rate(u)
        return 0.5 * u + 0.5 * (u1 + h * self.drift_rate(u1))

    def diffuse(self, u):
        c, h = self._c, self._h
        rhs = self.w * u + h * self._diag * u
        rhs[:-1] += h * c * u[1:]
        rhs[1:] += h * c * u[:-1]
        return solve_banded((1, 1), self._lhs, rhs, check_finite=False)

    def step(self, u):
        return self.drift_half(self.diffuse(self.drift_half(u)))


def solve_mean_field(kernel: InteractionKernel, config: SolverConfig) -> SpaceTimeField:
    """Integrate from ``config.initial_density`` and return every time level."""
    stepper = _Stepper(kernel, config)
    nt = config.times.nt
    out = np.empty((nt + 1, config.grid.nx + 1))
    u = config.initial_density.copy()
    out[0] = u
    for k in range(1, nt + 1):
        u = stepper.step(u)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite density at step {k} (t={k * config.times.dt:.4g})")
        out[k] = u
    umin = out.min()
    if umin < -1e-12:
        raise DivergenceError(f"density undershoot {umin:.3e} below -1e-12")
    log.debug("solved %d steps, mass drift %.2e", nt,
              np.max(np.abs(out @ config.grid.weights - 1.0)))
    return SpaceTimeField(config.grid, config.times, out)


def relax_to_stationary(kernel: InteractionKernel, nu: float, grid: SpaceGrid,
                        initial: np.ndarray, t_relax: float, dt: float) -> np.ndarray:
    """Long-time integration; returns the final density only."""
    nt = max(1, int(round(t_relax / dt)))
    times = TimeGrid(nt * dt, nt)
    stepper = _Stepper(kernel, SolverConfig(nu, grid, times, initial))
    u = np.asarray(initial, dtype=float).copy()
    for _ in range(nt):
        u = stepper.step(u)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite density during relaxation")
    return u
