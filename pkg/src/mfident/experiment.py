"""Config-driven pipeline: synthesize data, build the normal system, estimate
the kernel with every method and write CSV artifacts plus a hashed manifest.

Stages are computed lazily and cached, so each CLI verb runs only what it
needs.  A failing stage raises :class:`StageError` carrying the stage name.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from functools import cached_property
from pathlib import Path

import numpy as np

from . import regression as reg
from . import spectral as spec
from .config import ExperimentConfig
from .forward import SolverConfig, solve_mean_field
from .grid import SpaceTimeField, read_field_csv, write_field_csv
from .measures import compute_rho_radial, write_measure_csv

log = logging.getLogger(__name__)

TSVD_AUTO_FLOOR = 1e-6


class StageError(RuntimeError):
    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage
        self.err = err


def _stage(name):
    """Cache a pipeline stage and tag its failures with ``name``."""
    def wrap(fn):
        def run(self):
            try:
                return fn(self)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return cached_property(run)
    return wrap


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Pipeline:
    def __init__(self, config: ExperimentConfig, out_dir=None):
        self.config = config
        self.out = Path(out_dir) if out_dir is not None else config.resolve(config.output)
        self.written: list[Path] = []

    # -- stages --

    @_stage("solve")
    def data(self) -> SpaceTimeField:
        cfg = self.config
        if cfg.data is not None:
            return read_field_csv(cfg.resolve(cfg.data))
        sc = SolverConfig.from_distribution(cfg.nu, cfg.space_grid(), cfg.time_grid(),
                                            cfg.initial_distribution())
        return solve_mean_field(cfg.interaction_kernel(), sc)

    @_stage("measure")
    def measure(self):
        return compute_rho_radial(self.data)

    def system_for(self, n: int) -> reg.RegressionSystem:
        basis = reg.build_basis(self.measure.support, n, "radial")
        return reg.assemble_system(self.data, basis, self.config.nu, self.measure)

    @_stage("assemble")
    def system(self) -> reg.RegressionSystem:
        return self.system_for(self.config.n)

    @_stage("noise")
    def b(self) -> np.ndarray:
        """``b`` with optional componentwise relative Gaussian noise."""
        b = self.system.b
        if self.config.noise > 0:
            rng = np.random.default_rng(self.config.seed)
            b = b + self.config.noise * np.abs(b) * rng.standard_normal(b.size)
        return b

    @_stage("spectra")
    def decompositions(self) -> dict:
        s = self.system
        return {"unweighted": spec.svd_unweighted(s.A), "weighted": spec.eig_generalized(s.A, s.P)}

    @_stage("estimate")
    def estimates(self) -> dict:
        s, cfg, b = self.system, self.config, self.b
        out = {"plain": reg.solve_unregularized(s.A, b, s.basis)}
        B = spec.regularizer(cfg.norm, s.basis, s.P)
        grid = (np.asarray(cfg.lambda_grid) if cfg.lambda_grid is not None
                else spec.default_lambda_grid(s.A, B))
        lam, curve = spec.lcurve_select(s.A, b, B, grid)
        tik = spec.tikhonov_solve(s.A, b, B, lam, s.basis)
        out["tikhonov"] = reg.CoefficientEstimate(
            tik.c, s.basis, tik.loss, "tikhonov",
            dict(tik.reg_params, norm=cfg.norm, flat=curve.flat))
        self._lcurve = curve
        dec = self.decompositions[cfg.norm]
        m = cfg.tsvd_m
        if m is None:
            m = int(np.sum(dec.eigenvalues > TSVD_AUTO_FLOOR * dec.lambda_max))
        m = min(m, dec.positive_count)
        out["tsvd"] = spec.tsvd_solve(dec, b, m, s.basis)
        return out

    @_stage("recovery")
    def recovery(self) -> dict:
        kern = self.config.interaction_kernel()
        return {k: reg.l2rho_error(e, kern, self.measure) for k, e in self.estimates.items()}

    # -- writers --

    def _path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def write_data(self):
        write_field_csv(self.data, self._path("data.csv"))

    def write_measure(self):
        write_measure_csv(self.measure, self._path("measure.csv"))

    def write_system(self):
        for p in reg.write_system(self.system, self.out / "system"):
            self.written.append(p)

    def write_spectra(self):
        spec.write_spectra_csv(self.decompositions.values(), self._path("spectra.csv"))

    def write_picard(self):
        tabs = [spec.picard_table(d, self.b) for d in self.decompositions.values()]
        spec.write_picard_csv(tabs, self._path("picard.csv"))

    def write_estimates(self):
        for name, est in self.estimates.items():
            reg.write_estimate_csv(est, self._path(f"estimate_{name}.csv"))
        c = self._lcurve
        with self._path("lcurve.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "log_residual", "log_norm", "curvature", "selected"])
            for i, lam in enumerate(c.lambdas):
                w.writerow([repr(float(lam)), repr(float(c.log_residual[i])),
                            repr(float(c.log_norm[i])), repr(float(c.curvature[i])),
                            int(i == c.index)])

    def write_recovery(self):
        with self._path("recovery.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "error", "relative", "loss", "parameter"])
            for name, est in self.estimates.items():
                err = self.recovery[name]
                par = est.reg_params.get("lambda", est.reg_params.get("m", ""))
                w.writerow([name, repr(err.value), int(err.relative), repr(est.loss), par])

    def write_report(self):
        compare_svd_report(self.system, self._path("svd_report.csv"), b=self.b)

    def write_sweep(self):
        try:
            rows = sweep_rows(self, self.config.sweep)
        except Exception as exc:
            raise StageError("sweep", exc) from exc
        with self._path("sweep.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lambda_min", "lambda_max", "ratio", "weighted_lambda_min"])
            for r in rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])

    def write_manifest(self) -> Path:
        path = self.out / "manifest.json"
        seen, files = set(), []
        for p in self.written:
            if p in seen:
                continue
            seen.add(p)
            files.append({"path": p.relative_to(self.out).as_posix(), "sha256": _sha256(p),
                          "bytes": p.stat().st_size})
        doc = {"config": self.config.as_dict(), "artifacts": files}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=list) + "\n")
        return path


def sweep_rows(pipe: Pipeline, sizes) -> list[tuple]:
    """``(n, lambda_min, lambda_max, ratio, weighted_lambda_min)`` per basis size."""
    rows = []
    for n in sizes:
        s = pipe.system_for(n)
        w = np.linalg.eigvalsh(s.A)
        gw = spec.eig_generalized(s.A, s.P).eigenvalues
        rows.append((n, w[0], w[-1], w[0] / w[-1], float(gw[-1])))
    return rows


def compare_svd_report(system: reg.RegressionSystem, path=None, b=None) -> list[dict]:
    """Side-by-side Picard tables of the unweighted and weighted SVD.

    Besides the raw unweighted columns, ``*_l2`` columns rescale them to
    ``L2`` normalized eigenfunctions (eigenvalue / dr, projection / sqrt(dr));
    with ``P = dr I`` these coincide with the weighted columns.
    ``weighted_ge_unweighted`` compares the raw eigenvalues index by index.
    """
    b = system.b if b is None else np.asarray(b, dtype=float)
    du = spec.picard_table(spec.svd_unweighted(system.A), b)
    dw = spec.picard_table(spec.eig_generalized(system.A, system.P), b)
    dr = system.basis.dr
    rows = []
    for i in range(len(du.sigma)):
        row = {"i": i, "sigma_unweighted": du.sigma[i], "b_proj_unweighted": du.b_proj[i],
               "ratio_unweighted": du.ratio[i], "sigma_unweighted_l2": du.sigma[i] / dr,
               "b_proj_unweighted_l2": du.b_proj[i] / np.sqrt(dr),
               "ratio_unweighted_l2": du.ratio[i] * np.sqrt(dr)}
        if i < len(dw.sigma):
            row.update(sigma_weighted=dw.sigma[i], b_proj_weighted=dw.b_proj[i],
                       ratio_weighted=dw.ratio[i],
                       weighted_ge_unweighted=int(dw.sigma[i] >= du.sigma[i]))
        else:
            row.update(sigma_weighted=np.nan, b_proj_weighted=np.nan, ratio_weighted=np.nan,
                       weighted_ge_unweighted=0)
        rows.append(row)
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                            for k, v in r.items()})
    return rows


REPORT_COLUMNS = ["i", "sigma_unweighted", "b_proj_unweighted", "ratio_unweighted",
                  "sigma_unweighted_l2", "b_proj_unweighted_l2", "ratio_unweighted_l2",
                  "sigma_weighted", "b_proj_weighted", "ratio_weighted", "weighted_ge_unweighted"]


def read_svd_report(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected svd report header")
        return [{k: (int(v) if k in ("i", "weighted_ge_unweighted") else float(v))
                 for k, v in row.items()} for row in reader]


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Full pipeline; returns the manifest as a dict."""
    pipe = Pipeline(config, out_dir)
    pipe.write_data()
    pipe.write_measure()
    pipe.write_system()
    pipe.write_spectra()
    pipe.write_picard()
    pipe.write_estimates()
    pipe.write_recovery()
    pipe.write_report()
    if config.sweep:
        pipe.write_sweep()
    return json.loads(pipe.write_manifest().read_text())
