import numpy as np
import pytest
from scipy import stats

from mfident import backend
from mfident.forward import DivergenceError
from mfident.grid import InvalidInputError, SpaceGrid, TimeGrid
from mfident.initial import InitialDistribution
from mfident.interaction import InteractionKernel
from mfident.particles import (
    PAIR_CUTOFF, _drift_function, _polynomial_drift, empirical_density, read_snapshots_csv,
    simulate_particles, write_snapshots_csv,
)

NORMAL = InitialDistribution.parse("normal:0,0.5")


def _pair_sum(x, phi):
    d = x[None, :] - x[:, None]
    r = np.abs(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(r > PAIR_CUTOFF, phi(r) * np.sign(d), 0.0)
    return f.sum(axis=1) / x.size


class TestDrift:
    @pytest.mark.parametrize("terms", [((3.0, 2.0),), ((1.0, 1.0),), ((2.0, 0.0), (-1.0, 3.0))])
    def test_polynomial_prefix_sums(self, terms):
        x = np.random.default_rng(0).standard_normal(300)
        x[5] = x[7]  # a tie
        got, _ = _polynomial_drift(x, terms)
        want = _pair_sum(x, lambda r: sum(a * r ** e for a, e in terms))
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    def test_sort_hint_reused(self):
        x = np.random.default_rng(1).standard_normal(200)
        f = _drift_function(InteractionKernel.cubic())
        a = f(x)
        b = f(x + 1e-3 * np.random.default_rng(2).standard_normal(200))
        assert np.all(np.isfinite(b))
        np.testing.assert_allclose(a, _pair_sum(x, lambda r: 3 * r ** 2), rtol=1e-10)

    def test_singular_kernel_cutoff(self):
        x = np.array([0.0, 0.0, 0.5, -1.0])
        k = InteractionKernel.attraction_repulsion()
        got = _drift_function(k)(x)
        np.testing.assert_allclose(got, _pair_sum(x, k.phi), rtol=1e-12)

    def test_table_kernel(self):
        x = np.random.default_rng(3).uniform(-1, 1, 100)
        k = InteractionKernel.opinion_dynamics()
        np.testing.assert_allclose(_drift_function(k)(x), _pair_sum(x, k.phi), rtol=1e-12, atol=1e-15)


class TestSimulate:
    def test_no_dynamics(self):
        ens = simulate_particles(InteractionKernel.zero(), 50, 0.0, TimeGrid(1.0, 20), NORMAL, seed=3)
        np.testing.assert_array_equal(ens.positions, np.broadcast_to(ens.positions[0], ens.positions.shape))

    def test_ou_variance(self):
        ens = simulate_particles(InteractionKernel.linear(), 10_000, 0.25, TimeGrid(1.0, 1000),
                                 NORMAL, seed=11)
        assert abs(ens.at(-1).var() - 0.25) <= 0.02

    def test_determinism(self):
        args = (InteractionKernel.cubic(), 40, 0.02, TimeGrid(0.5, 50), NORMAL)
        a = simulate_particles(*args, seed=5).positions
        b = simulate_particles(*args, seed=5).positions
        c = simulate_particles(*args, seed=6).positions
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_exchangeability(self):
        # relabelling particles relabels trajectories
        args = (InteractionKernel.cubic(), 30, 0.02, TimeGrid(0.5, 50), NORMAL)
        ids = np.arange(30)
        perm = np.random.default_rng(7).permutation(30)
        a = simulate_particles(*args, seed=2, particle_ids=ids).positions
        b = simulate_particles(*args, seed=2, particle_ids=ids[perm]).positions
        np.testing.assert_allclose(b, a[:, perm], rtol=0, atol=1e-12)

    def test_divergence_names_step(self):
        with pytest.raises(DivergenceError, match="step"):
            simulate_particles(InteractionKernel.power((1e200, 8.0)), 5, 0.1, TimeGrid(1.0, 10),
                               NORMAL, seed=0)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            simulate_particles(InteractionKernel.cubic(), 1, 0.1, TimeGrid(1.0, 10), NORMAL, seed=0)
        with pytest.raises(InvalidInputError):
            simulate_particles(InteractionKernel.cubic(), 4, 0.1, TimeGrid(1.0, 10), NORMAL, seed=0,
                               particle_ids=[0, 0, 1, 2])

    def test_fixed_initial_positions(self):
        x0 = np.linspace(-1, 1, 8)
        ens = simulate_particles(InteractionKernel.cubic(), 8, 0.0, TimeGrid(0.1, 5), NORMAL, seed=0,
                                 initial_positions=x0)
        np.testing.assert_array_equal(ens.at(0), x0)
        # symmetric configuration without noise stays symmetric
        np.testing.assert_allclose(ens.at(-1), -ens.at(-1)[::-1], atol=1e-14)


class TestEmpiricalDensity:
    def test_point_mass(self):
        g = SpaceGrid(-1.0, 1.0, 10)
        d = empirical_density([0.0], g)
        assert np.count_nonzero(d) == 1
        assert d @ g.weights == pytest.approx(1.0)

    def test_uniform(self):
        g = SpaceGrid(0.0, 1.0, 10)
        x = np.random.default_rng(0).random(1_000_000)
        d = empirical_density(x, g)
        assert np.max(np.abs(d - 1.0)) <= 0.01
        assert d @ g.weights == pytest.approx(1.0)

    def test_normal_l1(self):
        g = SpaceGrid(-5.0, 5.0, 100)
        x = np.random.default_rng(1).standard_normal(100_000)
        d = empirical_density(x, g)
        assert np.abs(d - stats.norm.pdf(g.nodes)) @ g.weights <= 0.02

    def test_all_outside(self):
        with pytest.raises(InvalidInputError):
            empirical_density([5.0, 6.0], SpaceGrid(0.0, 1.0, 4))


class TestSnapshotsCSV:
    def test_round_trip(self, tmp_path):
        ens = simulate_particles(InteractionKernel.cubic(), 6, 0.02, TimeGrid(0.1, 4), NORMAL, seed=1)
        p = write_snapshots_csv(ens, tmp_path / "snap.csv")
        assert p.read_text().splitlines()[0] == "t,particle_id,x"
        t, ids, pos = read_snapshots_csv(p)
        np.testing.assert_array_equal(pos, ens.positions)
        np.testing.assert_array_equal(ids, np.arange(6))
        np.testing.assert_allclose(t, ens.times.times)


def test_backend_reported():
    assert backend.BACKEND in ("cython", "python")
