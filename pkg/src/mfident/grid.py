"""Uniform space/time grids, the solution container, and the quadrature and
finite-difference primitives shared by every other module.

Fields live on grid *nodes* ``x_i = x_min + i*dx``, ``i = 0..nx``.  All
spatial integrals use the composite trapezoid rule, so the node weights are
``dx`` in the interior and ``dx/2`` at the two ends.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NEG_TOL = 1e-12
MASS_TOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed or inconsistent input."""


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise InvalidInputError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if int(self.nx) != self.nx or self.nx < 2:
            raise InvalidInputError(f"nx must be an integer >= 2, got {self.nx}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx + 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights of the nodes."""
        w = np.full(self.nx + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    @property
    def offsets(self) -> np.ndarray:
        """Signed node differences ``j*dx`` for ``j = -nx..nx``."""
        return self.dx * np.arange(-self.nx, self.nx + 1)


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    nt: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise InvalidInputError(f"t_end must be positive, got {self.t_end}")
        if int(self.nt) != self.nt or self.nt < 1:
            raise InvalidInputError(f"nt must be a positive integer, got {self.nt}")

    @property
    def dt(self) -> float:
        return self.t_end / self.nt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class SpaceTimeField:
    """Values indexed ``[time, space]`` on a ``TimeGrid`` x ``SpaceGrid``.

    Construction only checks shapes.  Call :meth:`check_density` on data that
    is meant to be a probability density at every time.
    """

    grid: SpaceGrid
    times: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.times.nt + 1, self.grid.nx + 1)
        if values.shape != expected:
            raise InvalidInputError(f"values shape {values.shape} != {expected}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def masses(self) -> np.ndarray:
        return self.values @ self.grid.weights

    def check_density(self, neg_tol: float = NEG_TOL, mass_tol: float = MASS_TOL):
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field contains non-finite values")
        vmin = self.values.min()
        if vmin < -neg_tol:
            raise InvalidInputError(f"density has negative value {vmin:.3e}")
        mass = self.masses()
        bad = np.abs(mass - 1.0) > mass_tol
        if np.any(bad):
            k = int(np.argmax(bad))
            raise InvalidInputError(f"mass {mass[k]:.10f} at time index {k} is not 1")
        return self

    def clamped(self) -> np.ndarray:
        """Values with round-off negatives (above ``-NEG_TOL``) set to zero."""
        vmin = self.values.min()
        if vmin < -NEG_TOL:
            raise InvalidInputError(f"density has negative value {vmin:.3e}")
        return np.maximum(self.values, 0.0)

    @classmethod
    def stationary(cls, grid: SpaceGrid, times: TimeGrid, profile) -> "SpaceTimeField":
        """The same spatial profile repeated at every time."""
        profile = np.asarray(profile, dtype=float)
        return cls(grid, times, np.tile(profile, (times.nt + 1, 1)))


def trapezoid_integral(samples, spacing: float) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 2:
        raise InvalidInputError("trapezoid rule needs at least 2 samples")
    if not spacing > 0:
        raise InvalidInputError(f"spacing must be positive, got {spacing}")
    return float(spacing * (samples.sum() - 0.5 * (samples[0] + samples[-1])))


def trapezoid_weights(n: int, spacing: float) -> np.ndarray:
    w = np.full(n, float(spacing))
    w[0] = w[-1] = 0.5 * spacing
    return w


def discrete_convolution(kernel_samples, field_slice, spacing: float,
                         kernel_spacing: float | None = None) -> np.ndarray:
    """Trapezoid approximation of ``(K*u)(x_m) = sum_k K(x_m - x_k) u(x_k) w_k``.

    ``kernel_samples`` holds K on the odd-length, zero-centred offset grid
    ``j*spacing``; anything the offsets do not cover is treated as zero.
    """
    kernel = np.asarray(kernel_samples, dtype=float)
    u = np.asarray(field_slice, dtype=float)
    if kernel_spacing is not None and not np.isclose(kernel_spacing, spacing,
                                                     rtol=1e-12, atol=0.0):
        raise InvalidInputError(
            f"kernel spacing {kernel_spacing} does not match field spacing {spacing}")
    if kernel.ndim != 1 or kernel.size % 2 == 0:
        raise InvalidInputError("kernel samples must be a 1-D odd-length array")
    if u.ndim != 1 or u.size < 2:
        raise InvalidInputError("field slice must be a 1-D array of >= 2 samples")
    c = (kernel.size - 1) // 2
    full = np.convolve(u * trapezoid_weights(u.size, spacing), kernel)
    return full[c:c + u.size]


def finite_difference(field: SpaceTimeField, axis: str) -> SpaceTimeField:
    """Second-order derivative along ``"space"`` or ``"time"``.

    Central differences inside, one-sided second-order stencils at the ends.
    """
    if axis == "space":
        ax, h, n = 1, field.grid.dx, field.grid.nx + 1
    elif axis == "time":
        ax, h, n = 0, field.times.dt, field.times.nt + 1
    else:
        raise InvalidInputError(f"axis must be 'space' or 'time', got {axis!r}")
    if n < 3:
        raise InvalidInputError(f"need at least 3 points along {axis}, got {n}")
    deriv = np.gradient(field.values, h, axis=ax, edge_order=2)
    return SpaceTimeField(field.grid, field.times, deriv)


# -- CSV interchange -------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_field_csv(field: SpaceTimeField, path) -> Path:
    path = Path(path)
    t = field.times.times
    x = field.grid.nodes
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        for k, tk in enumerate(t):
            st = _fmt(tk)
            row = field.values[k]
            w.writerows((st, _fmt(xi), _fmt(ui)) for xi, ui in zip(x, row))
    return path


def read_field_csv(path) -> SpaceTimeField:
    """Read a ``t,x,u`` CSV back into a field; the grids are inferred."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "x", "u"]:
            raise InvalidInputError(f"{path}: expected header t,x,u, got {header}")
        data = np.array([[float(c) for c in row] for row in reader if row])
    if data.size == 0:
        raise InvalidInputError(f"{path}: no records")
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    if data.shape[0] != ts.size * xs.size:
        raise InvalidInputError(f"{path}: records do not form a full space-time grid")
    # time-major order is part of the format
    values = data[:, 2].reshape(ts.size, xs.size)
    if not (np.array_equal(data[:xs.size, 1], xs) and np.all(data[::xs.size, 0] == ts)):
        raise InvalidInputError(f"{path}: rows are not in time-major order")
    grid = SpaceGrid(float(xs[0]), float(xs[-1]), xs.size - 1)
    times = TimeGrid(float(ts[-1] - ts[0]), ts.size - 1)
    if abs(ts[0]) > 1e-14:
        raise InvalidInputError(f"{path}: time axis must start at t=0")
    if not (np.allclose(np.diff(xs), grid.dx, rtol=1e-9, atol=0)
            and np.allclose(np.diff(ts), times.dt, rtol=1e-9, atol=0)):
        raise InvalidInputError(f"{path}: grid is not uniform")
    return SpaceTimeField(grid, times, values)
