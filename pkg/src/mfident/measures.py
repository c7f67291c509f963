"""Data-adaptive measure and integral kernels built from a solution ``u``.

Everything lives on the offset grid ``j*dx`` of the data.  For a solution on
nodes ``x_m`` with trapezoid weights ``w_m`` we use

    a_m(t) = w_m u_m(t),        v_k(t) = u_k(t) w_k / dx,

so that ``(K*u)(x_m) = dx * sum_j K(j dx) v_{m-j}`` exactly reproduces the
trapezoid convolution.  With time weights ``tau_t`` (trapezoid over
snapshots) the kernels are

    rho(j)    = (1/T) sum_t tau_t sum_m a_m v_{m-j}
    F(j, l)   = (1/T) sum_t tau_t sum_m a_m v_{m-j} v_{m-l}
    G(r, s)   = F(r, s) - F(r, -s) - F(-r, s) + F(-r, -s)        (r, s >= 0)

and the normal matrix of any pair of sampled kernels is
``dx**2 * K_i^T F K_j``, identical to the convolution route.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import InvalidInputError, SpaceTimeField

log = logging.getLogger(__name__)

DEFAULT_SUPPORT_RATIO = 1e-8
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Density on an offset grid (signed, or ``r >= 0`` when ``radial``).

    ``support_mask`` marks nodes with density above ``support_threshold``.
    """

    offsets: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    radial: bool
    support_threshold: float
    support_mask: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, offsets, density, radial, threshold=None):
        density = np.asarray(density, dtype=float)
        if np.any(density < 0):
            raise InvalidInputError("measure density must be nonnegative")
        if threshold is None:
            threshold = DEFAULT_SUPPORT_RATIO * density.max()
        mask = density > threshold
        return cls(np.asarray(offsets, float), density, radial, float(threshold), mask)

    @property
    def dx(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.offsets.size, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def mass(self) -> float:
        return float(self.density @ self.weights)

    def with_threshold(self, threshold: float) -> "EmpiricalMeasure":
        if not threshold > 0:
            raise InvalidInputError(f"support threshold must be positive, got {threshold}")
        return replace(self, support_threshold=float(threshold),
                       support_mask=self.density > threshold)

    @property
    def support(self) -> tuple[float, float]:
        idx = np.flatnonzero(self.support_mask)
        if idx.size == 0:
            raise InvalidInputError("measure has empty support")
        return float(self.offsets[idx[0]]), float(self.offsets[idx[-1]])

    def index_of(self, points) -> np.ndarray:
        return _offset_index(self.offsets, points)


@dataclass(frozen=True)
class KernelMatrix:
    kind: str
    offsets: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    time_horizon: float
    masked: int = 0

    @property
    def n(self) -> int:
        return self.offsets.size

    def min_eig_ratio(self) -> float:
        """Smallest eigenvalue over the largest (>= -1e-10 means numerically PSD)."""
        ev = np.linalg.eigvalsh(0.5 * (self.values + self.values.T))
        top = max(ev[-1], np.finfo(float).tiny)
        return float(ev[0] / top)


def _offset_index(grid_offsets, points) -> np.ndarray:
    grid_offsets = np.asarray(grid_offsets, float)
    h = grid_offsets[1] - grid_offsets[0]
    idx = np.rint((np.asarray(points, float) - grid_offsets[0]) / h).astype(int)
    if np.any(idx < 0) or np.any(idx >= grid_offsets.size):
        raise InvalidInputError("offsets fall outside the data's offset range")
    if not np.allclose(grid_offsets[idx], points, rtol=0, atol=1e-9 * abs(h)):
        raise InvalidInputError("offsets are not on the data grid")
    return idx


def _pair_factors(u: SpaceTimeField):
    """Per-snapshot ``sqrt(tau/T) * a`` weights and ``v`` rows (see module doc)."""
    vals = u.clamped()
    w = u.grid.weights
    tau = u.times.weights / u.times.t_end
    a = vals * w * tau[:, None]
    v = vals * w / u.grid.dx
    return a, v


def compute_rho_general(u: SpaceTimeField) -> EmpiricalMeasure:
    """Time-averaged density of ``X - X'`` for independent ``X, X' ~ u(., t)``."""
    a, v = _pair_factors(u)
    nx = u.grid.nx
    rho = np.zeros(2 * nx + 1)
    for at, vt in zip(a, v):
        rho += np.convolve(at, vt[::-1])
    # exact symmetry; the two halves differ only in summation order
    rho = 0.5 * (rho + rho[::-1])
    return EmpiricalMeasure.build(u.grid.offsets, rho, radial=False)


def fold(measure: EmpiricalMeasure) -> EmpiricalMeasure:
    """Signed density to the density of ``|X - X'|`` on ``r >= 0``."""
    if measure.radial:
        raise InvalidInputError("measure is already radial")
    n = (measure.offsets.size - 1) // 2
    rho = measure.density[n:] + measure.density[n::-1]
    return EmpiricalMeasure.build(measure.offsets[n:], rho, radial=True)


def compute_rho_radial(u: SpaceTimeField) -> EmpiricalMeasure:
    return fold(compute_rho_general(u))


def support_of(measure: EmpiricalMeasure, threshold: float) -> tuple[float, float]:
    """Smallest closed interval holding every node with density > threshold."""
    return measure.with_threshold(threshold).support


def _shift_gram(u: SpaceTimeField, cols: np.ndarray) -> np.ndarray:
    """``F`` restricted to the offset indices ``cols`` (into ``-nx..nx``)."""
    a, v = _pair_factors(u)
    nt1, n = a.shape
    nx = u.grid.nx
    padded = np.zeros((nt1, 3 * nx + 1))
    padded[:, nx:2 * nx + 1] = v
    idx = np.arange(n)[:, None] - cols[None, :] + 2 * nx
    sqrt_a = np.sqrt(a)
    out = np.zeros((cols.size, cols.size))
    step = max(1, _CHUNK_ELEMS // (n * cols.size))
    for start in range(0, nt1, step):
        sl = slice(start, start + step)
        S = padded[sl][:, idx] * sqrt_a[sl][:, :, None]
        S = S.reshape(-1, cols.size)
        out += S.T @ S
    return 0.5 * (out + out.T)


def assemble_F(u: SpaceTimeField, offsets=None) -> KernelMatrix:
    """General-case kernel ``F(y, z) = (1/T) int int u(x-y) u(x-z) u(x) dx dt``."""
    full = u.grid.offsets
    cols = np.arange(full.size) if offsets is None else _offset_index(full, offsets)
    return KernelMatrix("F_bar", full[cols], _shift_gram(u, cols), u.times.t_end)


def assemble_G(u: SpaceTimeField, r_grid=None) -> KernelMatrix:
    """Radial kernel via the four-term identity (the unit sphere in 1-D is {-1, 1})."""
    nx = u.grid.nx
    full = u.grid.offsets
    r_all = full[nx:]
    ridx = np.arange(nx + 1) if r_grid is None else _offset_index(r_all, r_grid)
    if np.any(r_all[ridx] < 0):
        raise InvalidInputError("radial grid must be nonnegative")
    k = ridx.size
    cols = np.concatenate([nx + ridx, nx - ridx])
    F = _shift_gram(u, cols)
    pp, pm = F[:k, :k], F[:k, k:]
    mp, mm = F[k:, :k], F[k:, k:]
    G = pp - pm - mp + mm
    return KernelMatrix("G_bar", r_all[ridx], 0.5 * (G + G.T), u.times.t_end)


def weight_kernel(base: KernelMatrix, measure: EmpiricalMeasure) -> KernelMatrix:
    """``R = G / (rho x rho)`` (or ``Q = F / (rho x rho)``) on the support.

    Entries with either argument outside the support are set to 0; the number
    of such nodes is stored in ``masked``.
    """
    kinds = {"G_bar": "R_bar", "F_bar": "Q_bar"}
    if base.kind not in kinds:
        raise InvalidInputError(f"cannot weight a {base.kind} kernel")
    if measure.radial != (base.kind == "G_bar"):
        raise InvalidInputError("kernel and measure disagree on radial vs general")
    idx = measure.index_of(base.offsets)
    rho = measure.density[idx]
    mask = measure.support_mask[idx]
    inv = np.zeros_like(rho)
    inv[mask] = 1.0 / rho[mask]
    vals = base.values * inv[:, None] * inv[None, :]
    masked = int(np.count_nonzero(~mask))
    if masked:
        log.info("%s: %d nodes outside the support masked to 0", kinds[base.kind], masked)
    return KernelMatrix(kinds[base.kind], base.offsets, 0.5 * (vals + vals.T),
                        base.time_horizon, masked)


def weighted_hs_norm2(kernel: KernelMatrix, measure: EmpiricalMeasure) -> float:
    """``||Q||^2`` in ``L2(rho x rho)`` by node quadrature."""
    idx = measure.index_of(kernel.offsets)
    wr = measure.density[idx] * measure.dx
    return float(wr @ (kernel.values ** 2) @ wr)


# -- closed forms ---------------------------------------------------------------

@dataclass(frozen=True)
class GaussianClosedForms:
    """Stationary data ``u = N(0, nu)``, the invariant law for ``K(x) = x``.

    The variance is ``nu`` for the equation ``u_t = nu u_xx + (u (K*u))_x``
    (noise ``sqrt(2 nu)`` in the particle picture).
    """

    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidInputError(f"nu must be positive, got {self.nu}")

    def u(self, x):
        x = np.asarray(x, float)
        return np.exp(-x ** 2 / (2 * self.nu)) / np.sqrt(2 * np.pi * self.nu)

    def rho(self, x):
        x = np.asarray(x, float)
        return np.exp(-x ** 2 / (4 * self.nu)) / (2 * np.sqrt(np.pi * self.nu))

    def rho_radial(self, r):
        return 2.0 * self.rho(r)

    def F(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return (np.exp(-(x ** 2 + y ** 2 - x * y) / (3 * self.nu))
                / (2 * np.sqrt(3) * np.pi * self.nu))


def gaussian_closed_forms(nu: float) -> GaussianClosedForms:
    return GaussianClosedForms(nu)


@dataclass(frozen=True)
class CauchyClosedForms:
    """Stationary standard Cauchy data."""

    def u(self, x):
        x = np.asarray(x, float)
        return 1.0 / (np.pi * (1 + x ** 2))

    def rho(self, x):
        x = np.asarray(x, float)
        return 2.0 / (np.pi * (x ** 2 + 4))

    def F(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return (2 / np.pi ** 2 * (x ** 2 - x * y + y ** 2 + 12)
                / ((x ** 2 + 4) * (y ** 2 + 4) * (x ** 2 - 2 * x * y + y ** 2 + 4)))


def closed_form_kernels(forms, half_width: float, n: int):
    """Sample ``F`` and ``rho`` of a closed form on ``[-L, L]`` with ``2n+1`` nodes."""
    x = np.linspace(-half_width, half_width, 2 * n + 1)
    F = KernelMatrix("F_bar", x, forms.F(x[:, None], x[None, :]), np.inf)
    rho = EmpiricalMeasure.build(x, forms.rho(x), radial=False)
    return F, rho


# -- CSV ------------------------------------------------------------------------

def write_measure_csv(measure: EmpiricalMeasure, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "rho", "in_support"])
        for x, r, m in zip(measure.offsets, measure.density, measure.support_mask):
            w.writerow([repr(float(x)), repr(float(r)), int(m)])
    return path


def read_measure_csv(path, radial: bool | None = None) -> EmpiricalMeasure:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["x", "rho", "in_support"]:
            raise InvalidInputError(f"{path}: expected header x,rho,in_support")
        rows = [r for r in reader if r]
    x = np.array([float(r[0]) for r in rows])
    rho = np.array([float(r[1]) for r in rows])
    mask = np.array([r[2] == "1" for r in rows])
    if radial is None:
        radial = bool(x[0] >= 0)
    thr = float(rho[~mask].max()) if np.any(~mask) else 0.0
    return EmpiricalMeasure(x, rho, radial, thr, mask)


def write_kernel_csv(kernel: KernelMatrix, path) -> Path:
    """Header ``kind,n,T``, its values, the offsets row, then the matrix rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "n", "T"])
        w.writerow([kernel.kind, kernel.n, repr(float(kernel.time_horizon))])
        w.writerow([repr(float(o)) for o in kernel.offsets])
        for row in kernel.values:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_kernel_csv(path) -> KernelMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["kind", "n", "T"]:
            raise InvalidInputError(f"{path}: expected header kind,n,T")
        kind, n, T = next(reader)
        offsets = np.array([float(v) for v in next(reader)])
        values = np.array([[float(v) for v in row] for row in reader if row])
    n = int(n)
    if values.shape != (n, n) or offsets.size != n:
        raise InvalidInputError(f"{path}: matrix is not {n}x{n}")
    return KernelMatrix(kind, offsets, values, float(T))
