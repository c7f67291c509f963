"""Initial distributions shared by the PDE solver and the particle simulator.

Text form (used by the config file): ``normal:mean,std``,
``uniform:lo,hi`` or ``mixture:w,mean,std;w,mean,std;...``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .grid import InvalidInputError, SpaceGrid


@dataclass(frozen=True)
class InitialDistribution:
    kind: str
    params: tuple

    @classmethod
    def parse(cls, text: str) -> "InitialDistribution":
        try:
            kind, _, body = text.strip().partition(":")
            kind = kind.strip()
            if kind == "mixture":
                comps = tuple(tuple(float(v) for v in part.split(","))
                              for part in body.split(";") if part.strip())
                if not comps or any(len(c) != 3 for c in comps):
                    raise ValueError
                return cls(kind, comps)
            vals = tuple(float(v) for v in body.split(","))
        except ValueError:
            raise InvalidInputError(f"cannot parse initial distribution {text!r}") from None
        if kind in ("normal", "uniform") and len(vals) == 2:
            return cls(kind, vals)
        raise InvalidInputError(f"cannot parse initial distribution {text!r}")

    def __str__(self) -> str:
        if self.kind == "mixture":
            return "mixture:" + ";".join(",".join(repr(v) for v in c) for c in self.params)
        return f"{self.kind}:" + ",".join(repr(v) for v in self.params)

    def _components(self):
        if self.kind == "normal":
            return [(1.0, self.params[0], self.params[1])]
        if self.kind == "mixture":
            total = sum(c[0] for c in self.params)
            return [(w / total, m, s) for w, m, s in self.params]
        return None

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.where((x >= lo) & (x <= hi), 1.0 / (hi - lo), 0.0)
        return sum(w * stats.norm.pdf(x, m, s) for w, m, s in self._components())

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        return sum(w * stats.norm.cdf(x, m, s) for w, m, s in self._components())

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return lo + q * (hi - lo)
        comps = self._components()
        if len(comps) == 1:
            _, m, s = comps[0]
            return stats.norm.ppf(q, m, s)
        lo = min(m - 12 * s for _, m, s in comps)
        hi = max(m + 12 * s for _, m, s in comps)
        xs = np.linspace(lo, hi, 20001)
        return np.interp(q, self.cdf(xs), xs)

    def on_grid(self, grid: SpaceGrid) -> np.ndarray:
        """Density sampled at the nodes and rescaled to trapezoid mass 1."""
        vals = self.density(grid.nodes)
        mass = vals @ grid.weights
        if not mass > 0:
            raise InvalidInputError(f"initial distribution {self} has no mass on the grid")
        return vals / mass
