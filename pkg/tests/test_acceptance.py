"""Acceptance criteria 1-9, one test each.

Every test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary under "acceptance criteria".
Tolerances are the contract values and are never loosened here.
"""
import time

import numpy as np
import pytest

from mfident.config import example_config
from mfident.forward import SolverConfig, relax_to_stationary, solve_mean_field
from mfident.grid import SpaceGrid, TimeGrid
from mfident.initial import InitialDistribution
from mfident.interaction import InteractionKernel
from mfident.measures import (
    assemble_F, assemble_G, compute_rho_general, compute_rho_radial, gaussian_closed_forms,
    support_of, weight_kernel,
)
from mfident.particles import empirical_density, simulate_particles
from mfident.regression import (
    assemble_b_data, assemble_b_oracle, build_basis, l2rho_error, solve_unregularized,
)
from mfident.spectral import (
    default_lambda_grid, eig_generalized, lcurve_select, picard_table, regularizer, rkhs_subspace,
    subspace_solve, svd_unweighted, tikhonov_solve, tsvd_solve,
)

from helpers import EXAMPLE_NAMES, gaussian_field, kernels, pipeline, rel_gap, system


def _variance(u, g):
    m = (g.nodes * u) @ g.weights
    return ((g.nodes - m) ** 2 * u) @ g.weights


def test_1_gaussian_closed_forms(criterion):
    t0 = time.perf_counter()
    nu, half = 0.25, 6.0
    # which variance does K(x) = x with this diffusion scaling settle at: nu or nu**2?
    g = SpaceGrid(-half, half, 256)
    u0 = InitialDistribution.parse("normal:0.5,1.0").on_grid(g)
    var = _variance(relax_to_stationary(InteractionKernel.linear(), nu, g, u0, 12.0, 4e-3), g)
    resolved = abs(var - nu) < 0.01 * nu and abs(var - nu) < abs(var - nu ** 2)

    u = gaussian_field(nu, half, 256, 1000)
    forms = gaussian_closed_forms(nu)
    rho = compute_rho_general(u)
    on = rho.density >= 1e-4 * rho.density.max()
    err_rho = np.max(np.abs(rho.density[on] / forms.rho(rho.offsets[on]) - 1))
    x = rho.offsets[on]
    F = assemble_F(u, x)
    want = forms.F(x[:, None], x[None, :])
    err_F = np.max(np.abs(F.values / want - 1))
    elapsed = time.perf_counter() - t0
    ok = resolved and err_rho <= 1e-3 and err_F <= 1e-3 and elapsed <= 60
    assert criterion(1, ok, f"stationary var={var:.5f} (nu={nu}); rel sup err rho={err_rho:.2e}, "
                            f"F={err_F:.2e} (tol 1e-3); {elapsed:.1f}s (limit 60s)")


def test_2_mercer_and_support(criterion):
    worst, off, off_default = np.inf, 0.0, 0.0
    for name in EXAMPLE_NAMES:
        k = kernels(name)
        for kind in ("F_bar", "G_bar", "R_bar", "Q_bar"):
            worst = min(worst, k[kind].min_eig_ratio())
        G, rho = k["G_bar"], k["rho_radial"]
        for thr, acc in ((1e-12, "strict"), (1e-8, "default")):
            lo, hi = support_of(rho, thr * rho.density.max())
            outside = (G.offsets < lo) | (G.offsets > hi)
            v = float(np.max(np.abs(G.values[outside]))) if outside.any() else 0.0
            if acc == "strict":
                off = max(off, v)
            else:
                off_default = max(off_default, v)
    ok = worst >= -1e-10 and off <= 1e-10
    assert criterion(2, ok, f"min eig/max eig over 12 kernels = {worst:.2e} (>= -1e-10); "
                            f"max |G| off support (rho > 1e-12 max) = {off:.2e} (<= 1e-10); "
                            f"[at the 1e-8 default threshold: {off_default:.2e}]")


def test_3_ill_conditioning(criterion):
    t0 = time.perf_counter()
    sizes = (4, 8, 16, 32, 64)
    ok, parts = True, []
    for name in EXAMPLE_NAMES:
        ev = [np.linalg.eigvalsh(system(name, n).A) for n in sizes]
        lmin = np.array([e[0] for e in ev])
        lmax = np.array([e[-1] for e in ev])
        mono = bool(np.all(np.diff(lmin) <= 1e-12 * lmax[1:]))
        ratio = lmin[-1] / lmax[-1]
        ok &= mono and ratio <= 1e-6
        parts.append(f"{name}: monotone={mono} ratio64={ratio:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 300
    assert criterion(3, ok, "; ".join(parts) + f"; {elapsed:.0f}s (limit 300s)")


def _cubic_gap(nx, nt, basis):
    cfg = example_config("cubic", nx=nx, nt=nt)
    sc = SolverConfig.from_distribution(cfg.nu, cfg.space_grid(), cfg.time_grid(), cfg.initial_distribution())
    u = solve_mean_field(cfg.interaction_kernel(), sc)
    return rel_gap(assemble_b_data(u, basis, cfg.nu), assemble_b_oracle(u, basis, cfg.interaction_kernel()))


def test_4_b_assembly_consistency(criterion):
    basis = system("cubic", 16).basis
    coarse = _cubic_gap(256, 1000, basis)
    fine = _cubic_gap(512, 2000, basis)
    ok = coarse <= 0.01 and coarse / fine >= 3
    assert criterion(4, ok, f"rel l2 gap {coarse:.2e} at nx=256/nt=1000 (<= 1e-2), {fine:.2e} refined; "
                            f"ratio {coarse / fine:.2f} (>= 3)")


def test_5_tsvd_equals_rkhs_subspace(criterion):
    worst, count = 0.0, 0
    for name in EXAMPLE_NAMES:
        s = system(name, 16)
        for dec in (svd_unweighted(s.A), eig_generalized(s.A, s.P)):
            for m in range(1, dec.positive_count + 1):
                c1 = tsvd_solve(dec, s.b, m).c
                c2 = subspace_solve(s.A, s.b, rkhs_subspace(dec, m)).c
                worst = max(worst, np.linalg.norm(c1 - c2) / np.linalg.norm(c1))
                count += 1
    ok = worst <= 1e-12
    assert criterion(5, ok, f"max rel gap {worst:.2e} over {count} (example, norm, m) cases at n=16 "
                            f"(<= 1e-12)")


def test_6_weighted_vs_unweighted(criterion):
    ok, parts = True, []
    for name in EXAMPLE_NAMES:
        s = system(name, 32)
        tu = picard_table(svd_unweighted(s.A), s.b)
        tw = picard_table(eig_generalized(s.A, s.P), s.b)
        half = 16
        dom = tw.sigma[:half] / tu.sigma[:half]
        ok &= bool(np.all(dom >= 1.0))
        ru, rw = np.nanmedian(tu.ratio[:half]), np.nanmedian(tw.ratio[:half])
        parts.append(f"{name}: min sigma_w/sigma_u={dom.min():.1f}, median ratio u={ru:.2e} w={rw:.2e}")
    assert criterion(6, ok, "; ".join(parts))


def test_7_kernel_recovery(criterion):
    s = system("cubic", 16)
    rho = pipeline("cubic").measure
    kern = InteractionKernel.cubic()
    B = regularizer("weighted", s.basis, s.P)
    grid = default_lambda_grid(s.A, B)

    lam, _ = lcurve_select(s.A, s.b, B, grid)
    clean = l2rho_error(tikhonov_solve(s.A, s.b, B, lam, s.basis), kern, rho).value

    rng = np.random.default_rng(0)
    b = s.b + 0.01 * np.abs(s.b) * rng.standard_normal(s.b.size)
    lam_n, _ = lcurve_select(s.A, b, B, grid)
    reg = l2rho_error(tikhonov_solve(s.A, b, B, lam_n, s.basis), kern, rho).value
    plain = l2rho_error(solve_unregularized(s.A, b, s.basis), kern, rho).value
    ok = clean <= 0.15 and reg < plain
    assert criterion(7, ok, f"clean error {clean:.3f} (<= 0.15); 1% noise: Tikhonov {reg:.3f} "
                            f"< unregularized {plain:.3g}")


@pytest.mark.slow
def test_8_particle_pde_consistency(criterion):
    cfg = example_config("cubic")
    grid, times = cfg.space_grid(), cfg.time_grid()
    u_T = pipeline("cubic").data.values[-1]
    dist = cfg.initial_distribution()
    dists = []
    for n in (100, 1000, 10_000):
        dens = np.mean([empirical_density(simulate_particles(cfg.interaction_kernel(), n, cfg.nu, times,
                                                             dist, seed).at(-1), grid)
                        for seed in range(20)], axis=0)
        dists.append(float(np.abs(dens - u_T) @ grid.weights))
    ok = dists[-1] <= 0.1 and dists[0] >= dists[1] >= dists[2]
    assert criterion(8, ok, "L1 at N=1e2,1e3,1e4: " + ", ".join(f"{d:.3f}" for d in dists)
                     + " (last <= 0.1, non-increasing)")


def test_9_bilinear_form_chain(criterion):
    s = system("cubic", 16)
    k = kernels("cubic")
    G, R, rho = k["G_bar"], k["R_bar"], k["rho_radial"]
    dx = rho.dx
    phi = s.basis.overlap(G.offsets, dx)  # indicator samples on the radial grid
    w = rho.weights
    dens = rho.density[rho.index_of(G.offsets)]
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        i, j = rng.integers(0, s.basis.n, size=2)
        via_A = s.A[i, j]
        via_G = (phi[i] * w) @ G.values @ (phi[j] * w)
        via_R = (phi[i] * w * dens) @ R.values @ (phi[j] * w * dens)
        worst = max(worst, abs(via_G - via_A) / abs(via_A), abs(via_R - via_A) / abs(via_A))
    ok = worst <= 1e-8
    assert criterion(9, ok, f"max rel disagreement of A / G / R routes on 5 random pairs = {worst:.2e} "
                            f"(<= 1e-8)")
