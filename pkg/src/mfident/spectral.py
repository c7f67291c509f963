"""Spectral diagnostics and regularized solvers for the normal system.

Two geometries are supported: the plain Euclidean one (``svd_unweighted``)
and the one induced by the diagonal weight ``P`` (``eig_generalized``), whose
eigenvectors are ``P``-orthonormal.  Eigenvalues below ``1e-14 * max`` are
treated as numerically zero everywhere.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import InvalidInputError
from .regression import BasisSpec, CoefficientEstimate, loss_value

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-14
SYM_TOL = 1e-10
FLAT_TURN = 1e-10
LD = np.longdouble


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs sorted by decreasing eigenvalue.

    Eigenpairs are refined in extended precision when that succeeds, in which
    case ``eigenvalues`` and ``eigenvectors`` have dtype ``np.longdouble``.
    """

    weighted: bool
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    weight: np.ndarray | None = field(default=None, repr=False)
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def lambda_max(self) -> float:
        return float(max(self.eigenvalues[0], 0.0)) if self.eigenvalues.size else 0.0

    @property
    def positive_count(self) -> int:
        """Number of eigenvalues above the numerical floor."""
        return int(np.sum(self.eigenvalues > EIG_FLOOR * self.lambda_max))


def _check_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > SYM_TOL * scale:
        raise InvalidInputError("matrix is not symmetric")
    return 0.5 * (A + A.T)


def _refine_eigenpairs(M, X, iters: int = 4):
    """Ogita-Aishima refinement of the eigenpairs of symmetric ``M`` in long double.

    Near-degenerate pairs (gap below the method's cluster bound) are left as
    a block, so the iteration cannot blow up on clusters.  Returns ``None``
    when refinement fails to reach orthogonality.
    """
    M = np.asarray(M, dtype=LD)
    X = np.asarray(X, dtype=LD)
    n = X.shape[1]
    eye = np.eye(n, dtype=LD)
    normM = np.max(np.sum(np.abs(M), axis=1))
    for _ in range(iters):
        Rm = eye - X.T @ X
        Sm = X.T @ M @ X
        lam = np.diag(Sm) / (1 - np.diag(Rm))
        delta = 2 * (np.max(np.abs(Sm - np.diag(lam))) + normM * np.max(np.abs(Rm))) * n
        gap = lam[None, :] - lam[:, None]
        near = np.abs(gap) <= delta
        with np.errstate(divide="ignore", invalid="ignore"):
            E = np.where(near, 0.5 * Rm, (Sm + lam[None, :] * Rm) / np.where(near, 1, gap))
        X = X + X @ E
    if np.max(np.abs(eye - X.T @ X)) > 1e-13:
        return None
    lam = np.diag(X.T @ M @ X)
    order = np.argsort(lam)[::-1]
    return lam[order], X[:, order]


def _eigh_sorted(M):
    """Descending eigenpairs of ``M``, refined in long double if possible."""
    w, V = np.linalg.eigh(np.asarray(M, dtype=float))
    w, V = w[::-1].copy(), V[:, ::-1].copy()
    refined = _refine_eigenpairs(M, V)
    if refined is None:
        log.debug("eigenpair refinement did not converge; keeping double precision")
        return w, V
    return refined


def svd_unweighted(A) -> SpectralDecomposition:
    """``A = Phi D Phi^T`` with orthonormal ``Phi``, eigenvalues descending."""
    A = _check_symmetric(A)
    w, V = _eigh_sorted(A)
    return SpectralDecomposition(False, w, V, None, A)


def _diag_of(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 2:
        off = P - np.diag(np.diag(P))
        if np.any(off != 0):
            raise InvalidInputError("weight matrix must be diagonal")
        return np.diag(P).copy()
    return P.copy()


def eig_generalized(A, P) -> SpectralDecomposition:
    """Solve ``A psi = gamma P psi`` with ``Psi^T P Psi = I``.

    Cells with a zero weight are dropped before the solve (their rows of
    ``Psi`` are zero); the symmetric reduction ``P^-1/2 A P^-1/2`` keeps the
    problem symmetric.
    """
    A = _check_symmetric(A)
    p = _diag_of(P)
    if p.shape != (A.shape[0],):
        raise InvalidInputError(f"weight of size {p.size} does not match A {A.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidInputError("weight diagonal must be nonnegative and finite")
    keep = np.flatnonzero(p > 0)
    if keep.size == 0:
        raise InvalidInputError("weight has no positive entries")
    if keep.size < p.size:
        log.info("eig_generalized: dropping %d zero-weight cells", p.size - keep.size)
    s = 1.0 / np.sqrt(p[keep].astype(LD))
    M = s[:, None] * A[np.ix_(keep, keep)] * s[None, :]
    w, V = _eigh_sorted(0.5 * (M + M.T))
    Psi = np.zeros((A.shape[0], keep.size), dtype=V.dtype)
    Psi[keep] = (s[:, None] * V).astype(V.dtype)
    return SpectralDecomposition(True, w, Psi, np.diag(p), A)


# -- Picard diagnostics ---------------------------------------------------------

@dataclass(frozen=True)
class PicardTable:
    weighted: bool
    sigma: np.ndarray = field(repr=False)
    b_proj: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)

    def rows(self):
        for i, (s, p, r) in enumerate(zip(self.sigma, self.b_proj, self.ratio)):
            yield i, float(s), float(p), float(r)


def picard_table(decomp: SpectralDecomposition, b) -> PicardTable:
    """``|u_i^T b|`` against ``sigma_i``; the ratio is NaN below the eigenvalue floor."""
    b = np.asarray(b, dtype=float)
    if b.shape != (decomp.eigenvectors.shape[0],):
        raise InvalidInputError(f"b has shape {b.shape}, expected {(decomp.eigenvectors.shape[0],)}")
    proj = np.abs(decomp.eigenvectors.T @ b).astype(float)
    sig = decomp.eigenvalues.astype(float)
    ok = sig > EIG_FLOOR * decomp.lambda_max
    ratio = np.full_like(sig, np.nan)
    ratio[ok] = proj[ok] / sig[ok]
    return PicardTable(decomp.weighted, sig.copy(), proj, ratio)


# -- regularized solvers --------------------------------------------------------

def regularizer(kind: str, basis: BasisSpec, P=None) -> np.ndarray:
    """``dr * I`` for ``unweighted``, ``P`` for ``weighted``."""
    if kind == "unweighted":
        return basis.dr * np.eye(basis.n)
    if kind == "weighted":
        if P is None:
            raise InvalidInputError("weighted regularizer needs P")
        return np.diag(_diag_of(P))
    raise InvalidInputError(f"unknown regularization norm {kind!r}")


def tikhonov_solve(A, b, B, lam: float, basis: BasisSpec | None = None) -> CoefficientEstimate:
    """``(A + lam B)^-1 b``; records the loss and ``||c||_B``."""
    if not lam >= 0:
        raise InvalidInputError(f"lambda must be nonnegative, got {lam}")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.linalg.eigvalsh(0.5 * (B + B.T)) < -SYM_TOL * max(np.abs(B).max(), 1e-300)):
        raise InvalidInputError("regularizer B must be positive semidefinite")
    M = A + lam * B
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e15:
        raise np.linalg.LinAlgError(f"A + lambda*B is singular (cond={cond:.2e}); try a larger lambda")
    c = np.linalg.solve(M, b)
    return CoefficientEstimate(c, basis, loss_value(c, A, b), "tikhonov",
                               {"lambda": float(lam), "norm_B": float(np.sqrt(max(c @ B @ c, 0.0)))})


@dataclass(frozen=True)
class LCurve:
    lambdas: np.ndarray
    log_residual: np.ndarray
    log_norm: np.ndarray
    curvature: np.ndarray
    turning: np.ndarray
    index: int

    @property
    def flat(self) -> bool:
        return not np.nanmax(self.turning) > FLAT_TURN


def _menger(x, y):
    """Signed three-point curvature and turning angle at interior points (ends NaN)."""
    k = np.full(x.size, np.nan)
    turn = np.full(x.size, np.nan)
    ax, ay = x[1:-1] - x[:-2], y[1:-1] - y[:-2]
    bx, by = x[2:] - x[1:-1], y[2:] - y[1:-1]
    cx, cy = x[2:] - x[:-2], y[2:] - y[:-2]
    cross = ax * by - ay * bx
    den = np.sqrt((ax ** 2 + ay ** 2) * (bx ** 2 + by ** 2) * (cx ** 2 + cy ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        k[1:-1] = np.where(den > 0, 2.0 * cross / den, 0.0)
    turn[1:-1] = np.arctan2(cross, ax * bx + ay * by)
    return k, turn


def lcurve_select(A, b, B, lambda_grid) -> tuple[float, LCurve]:
    """Pick the grid lambda at the corner of the L-curve.

    The curve is ``(log(E(c_lam) - E_min), log ||c_lam||_B)``.  ``E_min`` is
    the loss minimum over the numerically positive spectrum, so the first
    coordinate is the squared residual ``(c_lam - c_0)^T A (c_lam - c_0)``.
    The corner is the largest positive signed curvature, with ties going to
    the larger lambda.  A curve that never turns towards the corner (every
    turning angle <= 1e-10 rad) needs no regularization, and the smallest
    lambda is returned.
    """
    lams = np.asarray(lambda_grid, dtype=float)
    if lams.ndim != 1 or lams.size < 5:
        raise InvalidInputError("lambda grid needs at least 5 values")
    if np.any(lams <= 0) or np.any(np.diff(lams) <= 0):
        raise InvalidInputError("lambda grid must be positive and strictly increasing")
    dec = eig_generalized(A, B)
    gam = dec.eigenvalues.astype(float)
    beta = (dec.eigenvectors.T @ np.asarray(b, dtype=dec.eigenvectors.dtype)).astype(float)
    pos = gam > EIG_FLOOR * dec.lambda_max
    g = np.where(pos, gam, 0.0)
    den = g[None, :] + lams[:, None]
    norm2 = np.sum(beta[None, :] ** 2 / den ** 2, axis=1)
    energy = np.where(pos, beta ** 2 / np.where(pos, g, 1.0), 0.0)
    resid = np.sum(energy[None, :] * (lams[:, None] / den) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        x, y = np.log(resid), 0.5 * np.log(norm2)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ArithmeticError("L-curve has zero residual or zero norm (is b zero?)")
    if np.ptp(x) == 0 and np.ptp(y) == 0:
        raise ArithmeticError("degenerate L-curve: all points coincide")
    kappa, turn = _menger(x, y)
    if not np.nanmax(turn) > FLAT_TURN:
        idx = 0
    else:
        best = np.nanmax(kappa)
        idx = int(np.flatnonzero(kappa >= best * (1 - 1e-12))[-1])
    return float(lams[idx]), LCurve(lams, x, y, kappa, turn, idx)


def default_lambda_grid(A, B, size: int = 49) -> np.ndarray:
    """Log grid from ``1e-10`` to ``1`` times ``lambda_max(A) / max diag(B)``."""
    scale = np.linalg.eigvalsh(np.asarray(A, dtype=float))[-1] / np.max(np.diag(B))
    return np.logspace(-10, 0, size) * scale


def tsvd_solve(decomp: SpectralDecomposition, b, m: int,
               basis: BasisSpec | None = None) -> CoefficientEstimate:
    """``Psi_m D_m^-1 Psi_m^T b`` over the leading ``m`` eigenpairs."""
    npos = decomp.positive_count
    if int(m) != m or not 1 <= m <= npos:
        raise InvalidInputError(f"truncation m={m} outside the positive spectrum 1..{npos}")
    m = int(m)
    V = decomp.eigenvectors[:, :m]
    c = V @ ((V.T @ np.asarray(b, dtype=V.dtype)) / decomp.eigenvalues[:m])
    c = c.astype(float)
    loss = loss_value(c, decomp.matrix, b) if decomp.matrix is not None else float("nan")
    return CoefficientEstimate(c, basis, loss, "tsvd", {"m": m, "weighted": decomp.weighted})


def rkhs_subspace(decomp: SpectralDecomposition, m: int) -> np.ndarray:
    """Coefficient columns of the leading ``m`` eigenfunctions."""
    if int(m) != m or not 1 <= m <= decomp.positive_count:
        raise InvalidInputError(f"m={m} outside the positive spectrum")
    return decomp.eigenvectors[:, : int(m)].copy()


def _solve_ld(G, r):
    """Gaussian elimination with partial pivoting, kept in long double."""
    G = np.array(G, dtype=LD)
    r = np.array(r, dtype=LD)
    n = r.size
    for i in range(n):
        p = i + int(np.argmax(np.abs(G[i:, i])))
        if G[p, i] == 0:
            raise np.linalg.LinAlgError("singular projected system")
        G[[i, p]] = G[[p, i]]
        r[[i, p]] = r[[p, i]]
        f = G[i + 1:, i] / G[i, i]
        G[i + 1:, i:] -= f[:, None] * G[i, i:][None, :]
        r[i + 1:] -= f * r[i]
    x = np.zeros(n, dtype=LD)
    for i in range(n - 1, -1, -1):
        x[i] = (r[i] - G[i, i + 1:] @ x[i + 1:]) / G[i, i]
    return x


def subspace_solve(A, b, V, basis: BasisSpec | None = None) -> CoefficientEstimate:
    """Minimize the loss over ``span(V)``: solve ``V^T A V alpha = V^T b``."""
    V = np.asarray(V)
    if V.ndim == 1:
        V = V[:, None]
    dt = LD if V.dtype == LD else float
    A = np.asarray(A, dtype=dt)
    b_ = np.asarray(b, dtype=dt)
    G = V.T @ A @ V
    G = 0.5 * (G + G.T)
    if dt is LD:
        alpha = _solve_ld(G, V.T @ b_)
    else:
        alpha = np.linalg.solve(G, V.T @ b_)
    c = (V @ alpha).astype(float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return CoefficientEstimate(c, basis, loss_value(c, A, b), "plain", {"subspace_dim": V.shape[1]})


# -- CSV ------------------------------------------------------------------------

def write_spectra_csv(decomps, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "lambda", "weighted"])
        for d in decomps:
            for i, lam in enumerate(d.eigenvalues):
                w.writerow([i, repr(float(lam)), int(d.weighted)])
    return path


def read_spectra_csv(path) -> dict[bool, np.ndarray]:
    path = Path(path)
    out: dict[bool, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["i", "lambda", "weighted"]:
            raise InvalidInputError(f"{path}: expected header i,lambda,weighted")
        for row in reader:
            if row:
                out.setdefault(bool(int(row[2])), []).append(float(row[1]))
    return {k: np.array(v) for k, v in out.items()}


def write_picard_csv(tables, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "sigma", "b_proj", "ratio", "weighted"])
        for t in tables:
            for i, s, p, r in t.rows():
                w.writerow([i, repr(s), repr(p), repr(r), int(t.weighted)])
    return path


def read_picard_csv(path) -> list[PicardTable]:
    path = Path(path)
    cols: dict[bool, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["i", "sigma", "b_proj", "ratio", "weighted"]:
            raise InvalidInputError(f"{path}: expected header i,sigma,b_proj,ratio,weighted")
        for row in reader:
            if row:
                cols.setdefault(bool(int(row[4])), []).append([float(v) for v in row[1:4]])
    tables = []
    for weighted, rows in cols.items():
        a = np.array(rows)
        tables.append(PicardTable(weighted, a[:, 0], a[:, 1], a[:, 2]))
    return tables
