"""Piecewise-constant hypothesis spaces, the normal system ``(A, b, P)`` and
the least-squares estimator of the interaction kernel.

Indicator basis functions are sampled onto the data's offset grid by the
fraction of each node's dual cell ``[p - dx/2, p + dx/2]`` they cover.  This
keeps every quadrature second-order even when knots fall between nodes.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import InvalidInputError, SpaceTimeField, finite_difference
from .interaction import InteractionKernel, kernel_from_phi
from .measures import EmpiricalMeasure

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class BasisSpec:
    """Indicators of the cells ``[r_{i-1}, r_i]`` of a uniform partition."""

    knots: np.ndarray = field(repr=False)
    mode: str = "radial"

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2 or np.any(np.diff(knots) <= 0):
            raise InvalidInputError("knots must be an increasing sequence of >= 2 values")
        if self.mode not in ("radial", "general"):
            raise InvalidInputError(f"mode must be 'radial' or 'general', got {self.mode!r}")
        if self.mode == "radial" and knots[0] < 0:
            raise InvalidInputError("radial basis must live on r >= 0")
        object.__setattr__(self, "knots", knots)

    @property
    def n(self) -> int:
        return self.knots.size - 1

    @property
    def dr(self) -> float:
        return float(self.knots[1] - self.knots[0])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.knots[1:] + self.knots[:-1])

    def overlap(self, points, dx: float) -> np.ndarray:
        """``(n, len(points))`` covered fraction of each node's dual cell."""
        p = np.asarray(points, dtype=float)[None, :]
        lo = np.maximum(p - 0.5 * dx, self.knots[:-1, None])
        hi = np.minimum(p + 0.5 * dx, self.knots[1:, None])
        return np.clip(hi - lo, 0.0, None) / dx

    def kernel_samples(self, offsets, dx: float) -> np.ndarray:
        """``K_i`` on signed offsets: ``sign(x) phi_i(|x|)`` (radial) or ``phi_i(x)``."""
        offsets = np.asarray(offsets, dtype=float)
        if self.mode == "radial":
            return np.sign(offsets)[None, :] * self.overlap(np.abs(offsets), dx)
        return self.overlap(offsets, dx)

    def antiderivative(self, r) -> np.ndarray:
        """``Phi_i(r) = int_0^r phi_i``, shape ``(n, len(r))`` (signed for general)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))[None, :]
        a, b = self.knots[:-1, None], self.knots[1:, None]
        right = np.clip(np.minimum(r, b) - np.maximum(a, 0.0), 0.0, None)
        # for r < 0 the integral runs backwards over [r, 0]
        left = -np.clip(np.minimum(b, 0.0) - np.maximum(r, a), 0.0, None)
        return np.where(r >= 0, right, left)

    def potential_samples(self, offsets) -> np.ndarray:
        offsets = np.asarray(offsets, dtype=float)
        if self.mode == "radial":
            return self.antiderivative(np.abs(offsets))
        return self.antiderivative(offsets)

    def evaluate(self, c, r) -> np.ndarray:
        """Point values of ``sum c_i phi_i``; cells are ``[r_{i-1}, r_i)``, last closed."""
        c = np.asarray(c, dtype=float)
        r = np.asarray(r, dtype=float)
        rr = np.abs(r) if self.mode == "radial" else r
        idx = np.searchsorted(self.knots, rr, side="right") - 1
        idx = np.where(rr == self.knots[-1], self.n - 1, idx)
        inside = (idx >= 0) & (idx < self.n)
        out = np.zeros_like(rr)
        out[inside] = c[idx[inside]]
        return out


def build_basis(support, n: int, mode: str = "radial") -> BasisSpec:
    lo, hi = map(float, support)
    if int(n) != n or n < 1:
        raise InvalidInputError(f"basis size must be a positive integer, got {n}")
    if not hi > lo:
        raise InvalidInputError(f"empty support [{lo}, {hi}]")
    return BasisSpec(np.linspace(lo, hi, int(n) + 1), mode)


@dataclass(frozen=True)
class RegressionSystem:
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    basis: BasisSpec
    nu: float


@dataclass(frozen=True)
class CoefficientEstimate:
    c: np.ndarray = field(repr=False)
    basis: BasisSpec | None
    loss: float
    method: str
    reg_params: dict = field(default_factory=dict)


# -- assembly -------------------------------------------------------------------

def _toeplitz_stack(kernels: np.ndarray, nx: int) -> np.ndarray:
    """``T[i, m, k] = K_i(x_m - x_k)`` for kernels sampled on ``-nx..nx``."""
    m = np.arange(nx + 1)
    idx = m[:, None] - m[None, :] + nx
    return kernels[:, idx]


def _convolutions(u: SpaceTimeField, kernels: np.ndarray):
    """Yield ``(time slice, C)`` with ``C[t, i, m] = (K_i * u(., t))(x_m)``."""
    kernels = np.atleast_2d(kernels)
    nx = u.grid.nx
    T = _toeplitz_stack(kernels, nx).reshape(-1, nx + 1)
    uw = u.clamped() * u.grid.weights
    step = max(1, _CHUNK_ELEMS // T.shape[0])
    for start in range(0, uw.shape[0], step):
        sl = slice(start, start + step)
        C = uw[sl] @ T.T
        yield sl, C.reshape(-1, kernels.shape[0], nx + 1)


def _time_space_weights(u: SpaceTimeField) -> np.ndarray:
    tau = u.times.weights / u.times.t_end
    return tau[:, None] * u.grid.weights[None, :]


def assemble_A(u: SpaceTimeField, basis: BasisSpec) -> np.ndarray:
    """``A_ij = (1/T) int int (K_i*u)(K_j*u) u dx dt`` by trapezoid quadrature."""
    Ks = basis.kernel_samples(u.grid.offsets, u.grid.dx)
    wa = _time_space_weights(u) * u.clamped()
    A = np.zeros((basis.n, basis.n))
    for sl, C in _convolutions(u, Ks):
        X = C * np.sqrt(wa[sl])[:, None, :]
        X = X.transpose(1, 0, 2).reshape(basis.n, -1)
        A += X @ X.T
    return 0.5 * (A + A.T)


def assemble_b_data(u: SpaceTimeField, basis: BasisSpec, nu: float) -> np.ndarray:
    """Derivative-free right-hand side from the data and ``nu`` alone:

    ``b_i = -(1/T) int int [u_t (Phi_i*u) + nu u_x (K_i*u)] dx dt``.
    """
    if u.times.nt + 1 < 3:
        raise InvalidInputError("need at least 3 snapshots for the time derivative")
    offs = u.grid.offsets
    Ks = basis.kernel_samples(offs, u.grid.dx)
    Phis = basis.potential_samples(offs)
    wts = _time_space_weights(u)
    ut = finite_difference(u, "time").values * wts
    ux = finite_difference(u, "space").values * wts
    n = basis.n
    b = np.zeros(n)
    kernels = np.concatenate([Phis, Ks])
    for sl, C in _convolutions(u, kernels):
        b -= np.einsum("tm,tim->i", ut[sl], C[:, :n])
        b -= nu * np.einsum("tm,tim->i", ux[sl], C[:, n:])
    return b


def assemble_b_oracle(u: SpaceTimeField, basis: BasisSpec, kernel) -> np.ndarray:
    """``b_i = <<phi_i, phi_true>>`` from the known kernel (synthetic data only).

    ``kernel`` is an :class:`InteractionKernel` or samples of ``K_true`` on
    the data's offset grid.
    """
    if isinstance(kernel, InteractionKernel):
        Ktrue = kernel_from_phi(kernel, u.grid)
    else:
        Ktrue = np.asarray(kernel, dtype=float)
        if Ktrue.shape != u.grid.offsets.shape:
            raise InvalidInputError("kernel samples must cover the data's offset grid")
    Ks = basis.kernel_samples(u.grid.offsets, u.grid.dx)
    wa = _time_space_weights(u) * u.clamped()
    n = basis.n
    b = np.zeros(n)
    for sl, C in _convolutions(u, np.concatenate([Ks, Ktrue[None, :]])):
        b += np.einsum("tim,tm->i", C[:, :n], C[:, n] * wa[sl])
    return b


def assemble_P(measure: EmpiricalMeasure, basis: BasisSpec) -> np.ndarray:
    """``diag(cell average of rho) * dr``, i.e. the rho-mass of every cell."""
    if measure.radial != (basis.mode == "radial"):
        raise InvalidInputError("measure and basis disagree on radial vs general")
    ov = basis.overlap(measure.offsets, measure.dx)
    diag = ov @ (measure.density * measure.dx)
    # the dual cell of the first node hangs half outside a r>=0 grid
    empty = np.flatnonzero(diag <= 0)
    if empty.size:
        log.warning("P: %d basis cells carry no rho mass: %s", empty.size, empty.tolist())
    return np.diag(diag)


def assemble_system(u: SpaceTimeField, basis: BasisSpec, nu: float,
                    measure: EmpiricalMeasure) -> RegressionSystem:
    return RegressionSystem(assemble_A(u, basis), assemble_b_data(u, basis, nu),
                            assemble_P(measure, basis), basis, float(nu))


# -- estimation -----------------------------------------------------------------

def loss_value(c, A, b) -> float:
    c = np.asarray(c, dtype=float)
    return float(c @ np.asarray(A) @ c - 2.0 * c @ np.asarray(b))


def solve_unregularized(A, b, basis: BasisSpec | None = None) -> CoefficientEstimate:
    """``A^{-1} b`` when ``cond(A) <= 1e12``, else the minimum-norm pseudo-inverse."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise InvalidInputError(f"incompatible shapes A{A.shape}, b{b.shape}")
    cond = np.linalg.cond(A)
    if np.isfinite(cond) and cond <= COND_LIMIT:
        c = np.linalg.solve(A, b)
        how = "direct"
    else:
        c = np.linalg.pinv(A, rcond=1e-14, hermitian=True) @ b
        how = "pinv"
    if not np.all(np.isfinite(c)):
        raise ArithmeticError("least-squares solve produced non-finite coefficients")
    return CoefficientEstimate(c, basis, loss_value(c, A, b), "plain",
                               {"cond": float(cond), "solver": how})


@dataclass(frozen=True)
class L2RhoError:
    value: float
    relative: bool

    def __float__(self):
        return self.value


def l2rho_error(estimate: CoefficientEstimate, kernel: InteractionKernel,
                measure: EmpiricalMeasure) -> L2RhoError:
    """``||phi_hat - phi_true|| / ||phi_true||`` in ``L2(rho)`` over the support.

    Falls back to the absolute error (``relative=False``) when ``phi_true``
    has zero norm.
    """
    if estimate.basis is None:
        raise InvalidInputError("estimate carries no basis")
    r = measure.offsets
    with np.errstate(divide="ignore", invalid="ignore"):
        truth = kernel.phi(np.abs(r) if measure.radial else r)
    wt = measure.weights * measure.density * measure.support_mask
    wt = np.where(np.isfinite(truth), wt, 0.0)
    truth = np.where(np.isfinite(truth), truth, 0.0)
    est = estimate.basis.evaluate(estimate.c, r)
    err = float(np.sqrt(wt @ (est - truth) ** 2))
    ref = float(np.sqrt(wt @ truth ** 2))
    if ref == 0.0:
        log.warning("phi_true has zero L2(rho) norm; returning absolute error")
        return L2RhoError(err, False)
    return L2RhoError(err / ref, True)


# -- CSV ------------------------------------------------------------------------

def _write_matrix(path: Path, M):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([repr(float(v)) for v in row])


def _read_matrix(path: Path) -> np.ndarray:
    with path.open(newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def write_system(system: RegressionSystem, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_matrix(d / "A.csv", system.A)
    _write_matrix(d / "b.csv", system.b[:, None])
    _write_matrix(d / "P.csv", system.P)
    with (d / "basis.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "nu"])
        w.writerow([system.basis.mode, repr(system.nu)])
        w.writerow(["knot"])
        for k in system.basis.knots:
            w.writerow([repr(float(k))])
    return [d / n for n in ("A.csv", "b.csv", "P.csv", "basis.csv")]


def read_system(directory) -> RegressionSystem:
    d = Path(directory)
    with (d / "basis.csv").open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows[0] != ["mode", "nu"] or rows[2] != ["knot"]:
        raise InvalidInputError(f"{d / 'basis.csv'}: malformed header")
    basis = BasisSpec(np.array([float(r[0]) for r in rows[3:]]), rows[1][0])
    A = _read_matrix(d / "A.csv")
    b = _read_matrix(d / "b.csv")[:, 0]
    P = _read_matrix(d / "P.csv")
    if A.shape != (basis.n, basis.n) or b.shape != (basis.n,) or P.shape != A.shape:
        raise InvalidInputError(f"{d}: system shapes do not match the basis")
    return RegressionSystem(A, b, P, basis, float(rows[1][1]))


def write_estimate_csv(est: CoefficientEstimate, path) -> Path:
    path = Path(path)
    mids = est.basis.midpoints if est.basis is not None else np.arange(est.c.size, dtype=float)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "r_mid", "c_i"])
        for i, (r, c) in enumerate(zip(mids, est.c)):
            w.writerow([i, repr(float(r)), repr(float(c))])
    return path


def read_estimate_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["i", "r_mid", "c_i"]:
            raise InvalidInputError(f"{path}: expected header i,r_mid,c_i")
        rows = [r for r in reader if r]
    return (np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows]))
