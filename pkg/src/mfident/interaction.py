"""Radial interaction kernels phi(r) and their potentials.

Two representations cover every built-in kind:

* a sum of power terms ``phi(r) = sum_k a_k r**e_k`` (cubic, linear, zero,
  attraction-repulsion);
* a piecewise-linear table, held constant beyond its last node (opinion
  dynamics, user-tabulated kernels).

The compiled particle drift consumes exactly these two forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import InvalidInputError, SpaceGrid

KINDS = ("cubic", "opinion_dynamics", "attraction_repulsion", "tabulated", "power")

# opinion dynamics: full influence up to r=0.5, linear decay to none at r=1
OPINION_NODES = (0.0, 0.5, 1.0)
OPINION_VALUES = (1.0, 1.0, 0.0)


@dataclass(frozen=True)
class InteractionKernel:
    kind: str
    power_terms: tuple = ()
    table_r: tuple = ()
    table_phi: tuple = ()
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown kernel kind {self.kind!r}")
        if self.is_tabulated:
            r = np.asarray(self.table_r, float)
            if r.size < 2 or r.size != len(self.table_phi):
                raise InvalidInputError("table needs >= 2 matching (r, phi) nodes")
            if r[0] != 0.0 or np.any(np.diff(r) <= 0):
                raise InvalidInputError("table nodes must start at 0 and increase")

    # -- constructors --------------------------------------------------------

    @classmethod
    def cubic(cls) -> "InteractionKernel":
        return cls("cubic", power_terms=((3.0, 2.0),))

    @classmethod
    def attraction_repulsion(cls) -> "InteractionKernel":
        return cls("attraction_repulsion", power_terms=((1.0, 1.0), (-1.0, -1.5)))

    @classmethod
    def opinion_dynamics(cls) -> "InteractionKernel":
        return cls("opinion_dynamics", table_r=OPINION_NODES, table_phi=OPINION_VALUES)

    @classmethod
    def power(cls, *terms) -> "InteractionKernel":
        """``power((a, e), ...)`` gives ``phi(r) = sum a r**e``; no terms is phi = 0."""
        return cls("power", power_terms=tuple((float(a), float(e)) for a, e in terms))

    @classmethod
    def zero(cls) -> "InteractionKernel":
        return cls.power()

    @classmethod
    def linear(cls, slope: float = 1.0) -> "InteractionKernel":
        return cls.power((slope, 1.0))

    @classmethod
    def tabulated(cls, r, phi) -> "InteractionKernel":
        return cls("tabulated", table_r=tuple(map(float, r)),
                   table_phi=tuple(map(float, phi)))

    @classmethod
    def from_name(cls, name: str) -> "InteractionKernel":
        builders = {"cubic": cls.cubic, "opinion_dynamics": cls.opinion_dynamics,
                    "attraction_repulsion": cls.attraction_repulsion}
        try:
            return builders[name]()
        except KeyError:
            raise InvalidInputError(f"no built-in kernel named {name!r}") from None

    # -- evaluation ----------------------------------------------------------

    @property
    def is_tabulated(self) -> bool:
        return self.kind in ("opinion_dynamics", "tabulated")

    @property
    def is_polynomial(self) -> bool:
        """Power form with non-negative integer exponents only."""
        return (not self.is_tabulated) and all(
            e >= 0 and float(e).is_integer() for _, e in self.power_terms)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_tabulated:
            return np.interp(r, self.table_r, self.table_phi)
        out = np.zeros_like(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            for a, e in self.power_terms:
                out = out + a * r ** e
        return out

    def potential(self, r):
        """``Phi(r) = int_0^r phi(s) ds``.

        Raises for kernels whose singularity at 0 is not integrable
        (attraction-repulsion), where no potential with ``Phi(0) = 0`` exists.
        """
        r = np.asarray(r, dtype=float)
        if self.is_tabulated:
            nodes = np.asarray(self.table_r)
            vals = np.asarray(self.table_phi)
            cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes))])
            idx = np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, nodes.size - 1)
            left = nodes[idx]
            phil = vals[idx]
            slope = np.zeros_like(vals)
            slope[:-1] = np.diff(vals) / np.diff(nodes)
            h = r - left
            return cum[idx] + phil * h + 0.5 * slope[idx] * h ** 2
        out = np.zeros_like(r)
        for a, e in self.power_terms:
            if e <= -1:
                raise InvalidInputError(
                    f"{self.kind}: r**{e} has no potential vanishing at r=0")
            out = out + a * r ** (e + 1) / (e + 1)
        return out


def kernel_from_phi(kernel: InteractionKernel, grid: SpaceGrid) -> np.ndarray:
    """Odd samples ``K(x) = sign(x) phi(|x|)`` on the offsets ``j*dx``, ``j=-nx..nx``.

    The zero offset is set to 0 and phi is never evaluated there, so kernels
    singular at r=0 are sampled safely.
    """
    nx = grid.nx
    r = grid.dx * np.arange(1, nx + 1)
    vals = kernel.phi(r)
    if not np.all(np.isfinite(vals)):
        bad = r[~np.isfinite(vals)][0]
        raise InvalidInputError(f"phi is not finite at r={bad}")
    return np.concatenate([-vals[::-1], [0.0], vals])
