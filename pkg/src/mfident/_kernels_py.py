"""Pure NumPy implementations of the hot loops.

Used when the compiled ``_kernels`` extension is unavailable (or disabled with
``MFIDENT_PURE_PYTHON=1``).  Signatures and results match the extension.
"""
import numpy as np

_CHUNK = 512


def muscl_flux(u, v_face):
    """Upwind flux ``v*u_face`` at the n faces of n+1 nodes, van Leer slopes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v_face, dtype=float)
    d = np.diff(u)
    s = np.zeros_like(u)
    a, b = d[:-1], d[1:]
    prod = a * b
    pos = prod > 0
    s[1:-1][pos] = 2.0 * prod[pos] / (a[pos] + b[pos])
    u_left = u[:-1] + 0.5 * s[:-1]
    u_right = u[1:] - 0.5 * s[1:]
    return np.maximum(v, 0.0) * u_left + np.minimum(v, 0.0) * u_right


def _pairwise(x, phi_of_r, cutoff):
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        xi = x[start:start + _CHUNK, None]
        diff = x[None, :] - xi
        r = np.abs(diff)
        close = r < cutoff
        with np.errstate(divide="ignore", invalid="ignore"):
            f = phi_of_r(np.where(close, 1.0, r)) * np.sign(diff)
        f[close] = 0.0
        out[start:start + _CHUNK] = f.sum(axis=1)
    return out / n


def pairwise_drift_power(x, coefs, exps, cutoff):
    """``(1/N) sum_j phi(|x_j-x_i|) sign(x_j-x_i)`` with ``phi = sum a r**e``.

    Pairs closer than ``cutoff`` contribute nothing.
    """
    coefs = np.asarray(coefs, dtype=float)
    exps = np.asarray(exps, dtype=float)

    def phi(r):
        return sum(a * r ** e for a, e in zip(coefs, exps)) if coefs.size else np.zeros_like(r)

    return _pairwise(x, phi, cutoff)


def pairwise_drift_table(x, table_r, table_phi, cutoff):
    """Same as :func:`pairwise_drift_power` for a piecewise-linear phi table."""
    tr = np.asarray(table_r, dtype=float)
    tp = np.asarray(table_phi, dtype=float)
    return _pairwise(x, lambda r: np.interp(r, tr, tp), cutoff)
