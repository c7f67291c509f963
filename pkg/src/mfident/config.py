"""Experiment configuration: an INI file with a fixed schema.

Unknown sections or keys are rejected so that a typo cannot silently fall
back to a default.  ``ExperimentConfig.to_ini`` and ``from_ini`` round-trip
losslessly (floats are written with ``repr``).

Example::

    [kernel]
    kind = cubic

    [model]
    nu = 0.02
    initial = mixture:0.5,-0.3,0.1;0.5,0.3,0.1

    [grid]
    x_min = -1.0
    x_max = 1.0
    nx = 256
    nt = 1000
    t_end = 1.0

    [basis]
    n = 16
    sweep = 4,8,16,32,64

    [regularization]
    method = tikhonov
    norm = weighted
    lambda_grid = auto
    tsvd_m = auto

    [noise]
    level = 0.0

    [run]
    seed = 0
    output = out
"""
from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .grid import InvalidInputError, SpaceGrid, TimeGrid
from .initial import InitialDistribution
from .interaction import KINDS, InteractionKernel

METHODS = ("plain", "tikhonov", "tsvd")
NORMS = ("weighted", "unweighted")


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "cubic"
    table_r: tuple = ()
    table_phi: tuple = ()
    terms: tuple = ()  # ((coef, exponent), ...) for kind = power
    nu: float = 0.02
    initial: str = "mixture:0.5,-0.3,0.1;0.5,0.3,0.1"
    x_min: float = -1.0
    x_max: float = 1.0
    nx: int = 256
    nt: int = 1000
    t_end: float = 1.0
    n: int = 16
    sweep: tuple = (4, 8, 16, 32, 64)
    method: str = "tikhonov"
    norm: str = "weighted"
    lambda_grid: tuple | None = None  # None = automatic
    tsvd_m: int | None = None  # None = automatic
    noise: float = 0.0
    seed: int = 0
    output: str = "out"
    data: str | None = None  # optional field CSV replacing the synthetic solve
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.kernel not in KINDS:
            raise InvalidInputError(f"unknown kernel kind {self.kernel!r}; expected one of {KINDS}")
        if not self.nu > 0:
            raise InvalidInputError(f"nu must be positive, got {self.nu}")
        if not self.x_max > self.x_min:
            raise InvalidInputError("x_max must exceed x_min")
        for name in ("nx", "nt", "n"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.nt < 2:
            raise InvalidInputError("nt must be >= 2 (time derivatives need 3 snapshots)")
        if not self.t_end > 0:
            raise InvalidInputError("t_end must be positive")
        if any(k < 1 for k in self.sweep):
            raise InvalidInputError("sweep sizes must be >= 1")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}")
        if self.norm not in NORMS:
            raise InvalidInputError(f"norm must be one of {NORMS}")
        if self.lambda_grid is not None and (len(self.lambda_grid) < 5 or min(self.lambda_grid) <= 0):
            raise InvalidInputError("lambda_grid needs >= 5 positive values")
        if self.tsvd_m is not None and self.tsvd_m < 1:
            raise InvalidInputError("tsvd_m must be >= 1")
        if self.noise < 0:
            raise InvalidInputError("noise level must be nonnegative")
        if self.data is not None and not self.resolve(self.data).is_file():
            raise InvalidInputError(f"data file {self.resolve(self.data)} does not exist")
        InitialDistribution.parse(self.initial)
        self.interaction_kernel()

    # -- derived objects --

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def interaction_kernel(self) -> InteractionKernel:
        if self.kernel == "tabulated":
            return InteractionKernel.tabulated(self.table_r, self.table_phi)
        if self.kernel == "power":
            return InteractionKernel.power(*self.terms)
        return InteractionKernel.from_name(self.kernel)

    def space_grid(self) -> SpaceGrid:
        return SpaceGrid(self.x_min, self.x_max, self.nx)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.nt)

    def initial_distribution(self) -> InitialDistribution:
        return InitialDistribution.parse(self.initial)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -- serialization --

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["kernel"] = {"kind": self.kernel}
        if self.kernel == "tabulated":
            cp["kernel"]["table_r"] = _floats(self.table_r)
            cp["kernel"]["table_phi"] = _floats(self.table_phi)
        if self.kernel == "power":
            cp["kernel"]["terms"] = ", ".join(f"{a!r}:{e!r}" for a, e in self.terms)
        cp["model"] = {"nu": repr(self.nu), "initial": self.initial}
        cp["grid"] = {"x_min": repr(self.x_min), "x_max": repr(self.x_max), "nx": str(self.nx),
                      "nt": str(self.nt), "t_end": repr(self.t_end)}
        cp["basis"] = {"n": str(self.n), "sweep": ",".join(map(str, self.sweep))}
        cp["regularization"] = {
            "method": self.method, "norm": self.norm,
            "lambda_grid": "auto" if self.lambda_grid is None else _floats(self.lambda_grid),
            "tsvd_m": "auto" if self.tsvd_m is None else str(self.tsvd_m),
        }
        cp["noise"] = {"level": repr(self.noise)}
        cp["run"] = {"seed": str(self.seed), "output": self.output}
        if self.data is not None:
            cp["run"]["data"] = self.data
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base_dir: str = ".") -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise InvalidInputError(f"malformed config: {exc}") from None
        for sec in cp.sections():
            if sec not in _SCHEMA:
                raise InvalidInputError(f"unknown config section [{sec}]")
            extra = set(cp[sec]) - set(_SCHEMA[sec])
            if extra:
                raise InvalidInputError(f"unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")
        kw = {}
        for sec, keys in _SCHEMA.items():
            if sec not in cp:
                continue
            for key, (attr, conv) in keys.items():
                if key in cp[sec]:
                    raw = cp[sec][key].strip()
                    try:
                        kw[attr] = conv(raw)
                    except ValueError as exc:
                        raise InvalidInputError(f"[{sec}] {key} = {raw!r}: {exc}") from None
        return cls(base_dir=str(base_dir), **kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise InvalidInputError(f"config file {path} does not exist")
        return cls.from_ini(path.read_text(), base_dir=str(path.parent))

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def _floats(xs) -> str:
    return ", ".join(repr(float(x)) for x in xs)


def _float_list(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _int_list(s: str) -> tuple:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _auto(conv):
    return lambda s: None if s == "auto" else conv(s)


def _terms(s: str) -> tuple:
    out = []
    for part in s.split(","):
        a, e = part.split(":")
        out.append((float(a), float(e)))
    return tuple(out)


_SCHEMA = {
    "kernel": {"kind": ("kernel", str), "table_r": ("table_r", _float_list),
               "table_phi": ("table_phi", _float_list), "terms": ("terms", _terms)},
    "model": {"nu": ("nu", float), "initial": ("initial", str)},
    "grid": {"x_min": ("x_min", float), "x_max": ("x_max", float), "nx": ("nx", int),
             "nt": ("nt", int), "t_end": ("t_end", float)},
    "basis": {"n": ("n", int), "sweep": ("sweep", _int_list)},
    "regularization": {"method": ("method", str), "norm": ("norm", str),
                       "lambda_grid": ("lambda_grid", _auto(_float_list)),
                       "tsvd_m": ("tsvd_m", _auto(int))},
    "noise": {"level": ("noise", float)},
    "run": {"seed": ("seed", int), "output": ("output", str), "data": ("data", str)},
}

# Desk-scale defaults for the three built-in examples.  Domains keep the
# density below 1e-10 at both ends for all t in [0, 1].
EXAMPLES = {
    "cubic": ExperimentConfig(),
    "opinion_dynamics": ExperimentConfig(kernel="opinion_dynamics", x_min=-2.0, x_max=2.0),
    "attraction_repulsion": ExperimentConfig(kernel="attraction_repulsion", nu=0.05,
                                             initial="normal:0,0.3", x_min=-3.0, x_max=3.0),
}


def example_config(name: str, **overrides) -> ExperimentConfig:
    if name not in EXAMPLES:
        raise InvalidInputError(f"unknown example {name!r}; expected one of {sorted(EXAMPLES)}")
    return EXAMPLES[name].with_overrides(**overrides)
