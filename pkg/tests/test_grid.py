import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfident.grid import (
    InvalidInputError, SpaceGrid, SpaceTimeField, TimeGrid, discrete_convolution,
    finite_difference, read_field_csv, trapezoid_integral, write_field_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestGrids:
    def test_space_grid(self):
        g = SpaceGrid(-1.0, 1.0, 8)
        assert g.dx == 0.25
        assert g.nodes.size == 9
        assert g.weights.sum() == pytest.approx(2.0)
        assert g.offsets[0] == -2.0 and g.offsets[-1] == 2.0

    @pytest.mark.parametrize("args", [(1.0, 0.0, 4), (0.0, 1.0, 1), (0.0, 1.0, 2.5)])
    def test_space_grid_invalid(self, args):
        with pytest.raises(InvalidInputError):
            SpaceGrid(*args)

    def test_time_grid(self):
        t = TimeGrid(1.0, 4)
        assert t.dt == 0.25
        np.testing.assert_allclose(t.times, [0, 0.25, 0.5, 0.75, 1.0])
        with pytest.raises(InvalidInputError):
            TimeGrid(0.0, 4)

    def test_field_shape_and_density_checks(self):
        g, t = SpaceGrid(0.0, 1.0, 4), TimeGrid(1.0, 2)
        with pytest.raises(InvalidInputError):
            SpaceTimeField(g, t, np.ones((2, 5)))
        f = SpaceTimeField.stationary(g, t, np.ones(5))
        f.check_density()
        bad = SpaceTimeField.stationary(g, t, 2 * np.ones(5))
        with pytest.raises(InvalidInputError, match="mass"):
            bad.check_density()
        neg = np.ones(5)
        neg[2] = -1e-6
        with pytest.raises(InvalidInputError, match="negative"):
            SpaceTimeField.stationary(g, t, neg).clamped()

    def test_clamp_tiny_negatives(self):
        g, t = SpaceGrid(0.0, 1.0, 4), TimeGrid(1.0, 2)
        vals = np.ones(5)
        vals[1] = -5e-13
        f = SpaceTimeField.stationary(g, t, vals)
        assert f.clamped().min() == 0.0

    def test_values_immutable(self):
        f = SpaceTimeField.stationary(SpaceGrid(0.0, 1.0, 4), TimeGrid(1.0, 2), np.ones(5))
        with pytest.raises(ValueError):
            f.values[0, 0] = 3.0


class TestTrapezoid:
    def test_zero(self):
        assert trapezoid_integral([0, 0, 0], 0.5) == 0.0

    def test_constant(self):
        assert trapezoid_integral([1, 1, 1, 1], 0.25) == pytest.approx(0.75, abs=1e-15)

    def test_sine(self):
        x = np.linspace(0, np.pi, 1001)
        assert abs(trapezoid_integral(np.sin(x), np.pi / 1000) - 2.0) < 1e-5

    def test_too_few(self):
        with pytest.raises(InvalidInputError):
            trapezoid_integral([1.0], 0.1)

    @given(arrays(float, 17, elements=finite), arrays(float, 17, elements=finite), finite, finite)
    def test_linearity(self, f, g, a, b):
        lhs = trapezoid_integral(a * f + b * g, 0.1)
        rhs = a * trapezoid_integral(f, 0.1) + b * trapezoid_integral(g, 0.1)
        scale = 1 + abs(a) * np.abs(f).sum() + abs(b) * np.abs(g).sum()
        assert abs(lhs - rhs) <= 1e-13 * scale


class TestConvolution:
    def test_zero_kernel(self):
        u = np.random.default_rng(0).random(11)
        np.testing.assert_array_equal(discrete_convolution(np.zeros(21), u, 0.1), 0.0)

    def test_delta_kernel(self):
        dx = 0.1
        u = np.random.default_rng(1).random(11)
        K = np.zeros(21)
        K[10] = 1.0 / dx
        w = np.full(11, dx)
        w[0] = w[-1] = dx / 2
        np.testing.assert_allclose(discrete_convolution(K, u, dx), u * w / dx, rtol=1e-14)

    def test_linear_kernel_on_gaussian(self):
        g = SpaceGrid(-8.0, 8.0, 1024)
        u = np.exp(-g.nodes ** 2 / 2) / np.sqrt(2 * np.pi)
        out = discrete_convolution(g.offsets, u, g.dx)
        inner = np.abs(g.nodes) <= 4
        assert np.max(np.abs(out[inner] - g.nodes[inner])) < 1e-3

    def test_matches_direct_quadrature(self):
        g = SpaceGrid(-1.0, 1.0, 40)
        rng = np.random.default_rng(2)
        K = rng.standard_normal(g.offsets.size)
        u = rng.random(g.nx + 1)
        direct = [sum(K[m - k + g.nx] * u[k] * g.weights[k] for k in range(g.nx + 1))
                  for m in range(g.nx + 1)]
        np.testing.assert_allclose(discrete_convolution(K, u, g.dx), direct, rtol=1e-12, atol=1e-14)

    def test_spacing_mismatch(self):
        with pytest.raises(InvalidInputError):
            discrete_convolution(np.ones(5), np.ones(3), 0.1, kernel_spacing=0.2)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidInputError):
            discrete_convolution(np.ones(4), np.ones(3), 0.1)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 17, elements=st.floats(-10, 10)), arrays(float, 17, elements=st.floats(-10, 10)))
    def test_commutative(self, f, g):
        # both arguments on the symmetric grid j*dx, j=-8..8 and vanishing at
        # its ends (where the trapezoid weights halve); zero-padding each to the
        # full offset range lets either play the kernel
        n, dx = 8, 0.125
        f, g = f.copy(), g.copy()
        f[[0, -1]] = g[[0, -1]] = 0.0
        pad = np.zeros(n)
        fz = np.concatenate([pad, f, pad])
        gz = np.concatenate([pad, g, pad])
        scale = 1 + np.abs(f).sum() * np.abs(g).max() * dx
        np.testing.assert_allclose(discrete_convolution(fz, g, dx), discrete_convolution(gz, f, dx),
                                   rtol=0, atol=1e-13 * scale)


class TestFiniteDifference:
    def _field(self, fn, lo=-3.0, hi=3.0, nx=768):
        g = SpaceGrid(lo, hi, nx)
        t = TimeGrid(1.0, 4)
        return SpaceTimeField(g, t, np.tile(fn(g.nodes), (5, 1)))

    def test_constant(self):
        d = finite_difference(self._field(lambda x: np.full_like(x, 2.0)), "space")
        np.testing.assert_array_equal(d.values, 0.0)

    def test_linear(self):
        d = finite_difference(self._field(lambda x: x, nx=64), "space")
        np.testing.assert_allclose(d.values, 1.0, atol=1e-10)

    def test_gaussian(self):
        f = self._field(lambda x: np.exp(-x ** 2))
        d = finite_difference(f, "space")
        x = f.grid.nodes
        assert np.max(np.abs(d.values - (-2 * x * np.exp(-x ** 2)))) < 1e-4

    def test_quadratic_exact(self):
        f = self._field(lambda x: 3 * x ** 2 - x + 1, nx=32)
        d = finite_difference(f, "space")
        x = f.grid.nodes
        np.testing.assert_allclose(d.values[:, 1:-1], np.tile((6 * x - 1)[1:-1], (5, 1)), atol=1e-11)

    def test_time_axis(self):
        g, t = SpaceGrid(0.0, 1.0, 4), TimeGrid(1.0, 10)
        vals = np.outer(t.times ** 2, np.ones(5))
        d = finite_difference(SpaceTimeField(g, t, vals), "time")
        np.testing.assert_allclose(d.values, np.outer(2 * t.times, np.ones(5)), atol=1e-12)

    def test_too_few_points(self):
        g, t = SpaceGrid(0.0, 1.0, 4), TimeGrid(1.0, 1)
        with pytest.raises(InvalidInputError):
            finite_difference(SpaceTimeField(g, t, np.ones((2, 5))), "time")
        with pytest.raises(InvalidInputError):
            finite_difference(SpaceTimeField(g, t, np.ones((2, 5))), "depth")


class TestFieldCSV:
    def test_round_trip(self, tmp_path):
        g, t = SpaceGrid(-1.0, 1.0, 8), TimeGrid(0.5, 3)
        vals = np.random.default_rng(4).random((4, 9))
        f = SpaceTimeField(g, t, vals)
        p = write_field_csv(f, tmp_path / "u.csv")
        assert p.read_text().splitlines()[0] == "t,x,u"
        back = read_field_csv(p)
        np.testing.assert_array_equal(back.values, vals)
        assert back.grid.nx == 8 and back.times.nt == 3
        assert back.times.t_end == pytest.approx(0.5)

    def test_rejects_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n0,0,1\n")
        with pytest.raises(InvalidInputError):
            read_field_csv(p)
