import math
import warnings

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from varnet import autodiff as ad
from varnet import math as vm
from varnet import network
from varnet.sampling import box
from varnet.stack import derivative_stack

from .helpers import central_diff, random_net_fd_stack


def exact_integral(coeffs, lo, hi):
    anti = P.polyint(coeffs)
    return P.polyval(hi, anti) - P.polyval(lo, anti)


class TestQuadrature:
    def test_constant_trapezoid(self):
        assert float(vm.integral(np.ones(100), box((0, 3, 100)))) == 3.0

    def test_cubic_simpson(self):
        x = np.linspace(0, 1, 101)
        assert float(vm.integral(x**3, x, "simpson")) == pytest.approx(0.25, rel=1e-14)

    def test_sine_romberg(self):
        x = np.linspace(0, math.pi, 129)
        assert abs(float(vm.integral(np.sin(x), x, "romberg")) - 2.0) <= 1e-10

    @pytest.mark.parametrize(
        "method, degree, n_points",
        [
            ("left_riemann", 0, 17),
            ("right_riemann", 0, 17),
            ("trapezoid", 1, 17),
            ("simpson", 3, 17),
            ("boole", 5, 17),
            ("romberg", 5, 17),
        ],
    )
    def test_exactness_degree(self, method, degree, n_points):
        rng = np.random.default_rng(degree)
        lo, hi = -0.7, 1.9
        x = np.linspace(lo, hi, n_points)
        for _ in range(10):
            coeffs = rng.normal(size=degree + 1)
            want = exact_integral(coeffs, lo, hi)
            got = float(vm.integral(P.polyval(x, coeffs), x, method))
            assert abs(got - want) <= 1e-12 * max(abs(want), 1.0)

    @pytest.mark.parametrize("method, degree", [("trapezoid", 2), ("simpson", 4), ("boole", 6)])
    def test_exactness_is_sharp(self, method, degree):
        x = np.linspace(0, 1, 9)
        got = float(vm.integral(x**degree, x, method))
        assert abs(got - 1 / (degree + 1)) > 1e-8

    @pytest.mark.parametrize("k", [5, 7, 9])
    def test_romberg_exponential(self, k):
        x = np.linspace(0, 1, 2**k + 1)
        assert abs(float(vm.integral(np.exp(x), x, "romberg")) - (math.e - 1)) <= 1e-10

    def test_weights_are_a_linear_functional(self):
        x = np.linspace(0, 2, 33)
        values = np.stack([np.sin(x), x**2, np.ones_like(x)], axis=1)
        got = vm.integral(values, x, "simpson")
        assert got.shape == (3,)
        for j in range(3):
            assert got[j] == pytest.approx(float(vm.integral(values[:, j], x, "simpson")), rel=1e-15)

    @pytest.mark.parametrize("method, n_points", [("simpson", 100), ("boole", 100), ("romberg", 100)])
    def test_remainder_falls_back_to_trapezoid(self, method, n_points):
        x = np.linspace(0, 3, n_points)
        with pytest.warns(vm.QuadratureWarning):
            got = float(vm.integral(np.ones(n_points), x, method))
        assert got == pytest.approx(3.0, rel=1e-14)
        with pytest.raises(vm.PointCountIncompatible):
            vm.integral(np.ones(n_points), x, method, strict=True)

    def test_warning_repeats_despite_weight_cache(self):
        x = np.linspace(0, 1, 50)
        for _ in range(2):
            with pytest.warns(vm.QuadratureWarning):
                vm.integral(np.ones(50), x, "boole")

    def test_cached_weights_are_read_only(self):
        w = vm.quadrature_weights(11, 0.1, "simpson")
        with pytest.raises(ValueError):
            w[0] = 1.0

    def test_compatible_counts_do_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            vm.integral(np.ones(101), np.linspace(0, 1, 101), "simpson")
            vm.integral(np.ones(101), np.linspace(0, 1, 101), "boole")
            vm.integral(np.ones(129), np.linspace(0, 1, 129), "romberg")

    def test_non_uniform_grid(self):
        with pytest.raises(vm.NonUniformGrid):
            vm.integral(np.ones(4), np.array([0.0, 0.1, 0.5, 1.0]))

    def test_multidimensional_domain_rejected(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.integral(np.ones(4), box((0, 1, 2), (0, 1, 2)))

    def test_length_mismatch(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.integral(np.ones(5), np.linspace(0, 1, 6))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            vm.integral(np.ones(5), np.linspace(0, 1, 5), "gauss")

    def test_parameter_gradient_through_integral(self):
        model = network.build([1, 5, 1], seed=3)
        domain = box((0, 3, 33))

        def arc_length(flat):
            m = model.copy()
            m.set_flat_parameters(flat)
            slope = derivative_stack(m, domain.points, 1)[1].value[:, 0]
            return float(vm.integral(np.sqrt(1 + slope**2), domain, "simpson")[0])

        tape = ad.Tape()
        params = tape.watch(model.parameters())
        slope = derivative_stack(model, domain.points, 1, tape, params)[1][:, 0]
        length = ad.reduce_sum(vm.integral(ad.sqrt(1.0 + slope * slope), domain, "simpson"))
        grads = np.concatenate([np.ravel(g) for g in ad.grad(length, params)])
        flat = model.flat_parameters()
        for i in range(flat.size):
            fd = central_diff(lambda v: arc_length(np.where(np.arange(flat.size) == i, v, flat)), flat[i])
            assert abs(grads[i] - fd) <= 1e-5 * max(abs(fd), 1e-3)


class TestDerivative:
    def test_square(self):
        domain = box((0, 1, 11))
        d = vm.derivative(lambda x: x * x, domain, 1)
        assert d.shape == (11, 1, 1)
        np.testing.assert_allclose(d.value[:, 0, 0], 2 * domain.points[:, 0], rtol=0, atol=0)

    def test_exp_second_order_at_zero(self):
        d = vm.derivative(ad.exp, np.array([[0.0]]), 2)
        assert d.value[0, 0, 0, 0] == 1.0

    def test_random_net_first_order(self):
        model = network.build([2, 6, 2], activation="tanh", seed=9)
        x = np.random.default_rng(0).uniform(-1, 1, size=(12, 2))
        d = vm.derivative(model, x, 1)
        fd, _ = random_net_fd_stack(model, x)
        assert np.max(np.abs(d.value - fd) / np.maximum(np.abs(fd), 1e-2)) <= 1e-5

    def test_order_zero_is_values(self):
        model = network.build([1, 3, 1])
        x = np.linspace(0, 1, 4)[:, None]
        np.testing.assert_array_equal(vm.derivative(model, x, 0).value, model(x))

    def test_order_unsupported(self):
        with pytest.raises(ad.OrderUnsupported):
            vm.derivative(ad.exp, np.zeros((1, 1)), ad.MAX_ORDER + 1)


class TestVectorCalculus:
    points = np.random.default_rng(7).uniform(-1, 1, size=(9, 3))

    def test_divergence_identity_field(self):
        d1 = vm.derivative(lambda X: X, self.points[:, :2], 1)
        np.testing.assert_array_equal(ad.value_of(vm.divergence(d1)), 2.0)

    def test_divergence_rotation(self):
        rot = lambda X: ad.stack([ad.neg(X[:, 1]), X[:, 0]], axis=1)
        d1 = vm.derivative(rot, self.points[:, :2], 1)
        np.testing.assert_array_equal(ad.value_of(vm.divergence(d1)), 0.0)

    def test_divergence_is_jacobian_trace(self):
        model = network.build([3, 5, 3], seed=1)
        d1 = derivative_stack(model, self.points, 1)[1]
        div = ad.value_of(vm.divergence(d1))
        np.testing.assert_allclose(div, np.trace(d1.value, axis1=1, axis2=2), rtol=1e-14)

    def test_divergence_needs_square(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.divergence(np.zeros((4, 2, 3)))

    def test_curl_of_gradient_of_quadratic(self):
        # grad of x² + y² + z² is 2(x, y, z)
        d1 = vm.derivative(lambda X: 2.0 * X, self.points, 1)
        np.testing.assert_array_equal(ad.value_of(vm.curl(d1)), 0.0)

    def test_curl_of_rotation(self):
        rot = lambda X: ad.stack([ad.neg(X[:, 1]), X[:, 0], 0.0 * X[:, 2]], axis=1)
        d1 = vm.derivative(rot, self.points, 1)
        np.testing.assert_array_equal(ad.value_of(vm.curl(d1)), np.tile([0.0, 0.0, 2.0], (9, 1)))

    def test_curl_needs_three_by_three(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.curl(np.zeros((4, 2, 2)))

    @pytest.mark.parametrize("seed", range(20))
    def test_curl_grad_and_div_curl_vanish(self, seed):
        x = np.random.default_rng(seed).uniform(-2, 2, size=(16, 3))
        scalar = network.build([3, 6, 1], activation="tanh", seed=seed)
        hessian = derivative_stack(scalar, x, 2)[2]
        # the Jacobian of grad g is the Hessian of g
        assert np.max(np.abs(ad.value_of(vm.curl(hessian[..., 0])))) <= 1e-10

        vector = network.build([3, 6, 3], activation="sigmoid", seed=100 + seed)
        d2 = derivative_stack(vector, x, 2)[2]
        # div curl g = Σ_i ∂_i (curl g)_i, expanded over second partials
        eps = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}
        total = sum(s * ad.value_of(d2[:, i, j, k]) for (i, j, k), s in eps.items())
        assert np.max(np.abs(total)) <= 1e-10


class TestSecondOrderOperators:
    grid = box((-1, 1, 5), (-1, 1, 5)).points

    def second(self, fn, points=None):
        return vm.derivative(fn, self.grid if points is None else points, 2)

    def test_laplacian_paraboloid(self):
        d2 = self.second(lambda X: X[:, 0:1] ** 2 + X[:, 1:2] ** 2)
        np.testing.assert_array_equal(ad.value_of(vm.laplacian(d2)), 4.0)

    def test_laplacian_harmonic(self):
        d2 = self.second(lambda X: X[:, 0:1] ** 2 - X[:, 1:2] ** 2)
        np.testing.assert_array_equal(ad.value_of(vm.laplacian(d2)), 0.0)

    def test_laplacian_equals_euclidean_laplace_beltrami(self):
        model = network.build([3, 7, 2], seed=4)
        d2 = derivative_stack(model, np.random.default_rng(4).normal(size=(10, 3)), 2)[2]
        a = ad.value_of(vm.laplacian(d2))
        b = ad.value_of(vm.laplace_beltrami(d2, "euclidean"))
        assert a.tobytes() == b.tobytes()

    def test_mostlyminus_signature(self):
        d2 = self.second(lambda X: X[:, 0:1] ** 2 + X[:, 1:2] ** 2)
        np.testing.assert_array_equal(ad.value_of(vm.laplace_beltrami(d2, "mostlyminus", time_axis=0)), 0.0)

    def test_mostlyplus_is_negated_mostlyminus(self):
        model = network.build([3, 5, 2], seed=6)
        d2 = derivative_stack(model, np.random.default_rng(6).normal(size=(8, 3)), 2)[2]
        for t in range(3):
            plus = ad.value_of(vm.laplace_beltrami(d2, "mostlyplus", t))
            minus = ad.value_of(vm.laplace_beltrami(d2, "mostlyminus", t))
            assert plus.tobytes() == (-minus).tobytes()

    def test_explicit_metric(self):
        g = np.array([[2.0, 0.5], [0.5, -1.0]])
        d2 = self.second(lambda X: X[:, 0:1] * X[:, 1:2] + X[:, 0:1] ** 2)
        # ∂xx = 2, ∂xy = 1, ∂yy = 0
        np.testing.assert_allclose(ad.value_of(vm.laplace_beltrami(d2, vm.Metric(g))), 2 * 2 + 2 * 0.5 * 1)

    def test_metric_validation(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.Metric(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(vm.DimensionMismatch):
            vm.laplace_beltrami(self.second(lambda X: X[:, 0:1]), vm.Metric(np.eye(3)))
        with pytest.raises(vm.AxisOutOfRange):
            vm.laplace_beltrami(self.second(lambda X: X[:, 0:1]), "mostlyminus", time_axis=2)
        with pytest.raises(ValueError):
            vm.Metric("lorentzian")

    @pytest.mark.parametrize("c", [1.0, 2.0, 0.5])
    def test_dalembertian_annihilates_plane_waves(self, c):
        rng = np.random.default_rng(int(c * 10))
        tx = rng.uniform(-2, 2, size=(25, 2))
        for k in (0.5, 1.0, 3.0):
            wave = lambda X, k=k: ad.sin(k * X[:, 1:2] - c * k * X[:, 0:1])
            d2 = vm.derivative(wave, tx, 2)
            assert np.max(np.abs(ad.value_of(vm.dalembertian(d2, time_axis=0, c=c)))) <= 1e-10

    def test_dalembertian_in_three_plus_one(self):
        rng = np.random.default_rng(3)
        txyz = rng.uniform(-1, 1, size=(20, 4))
        kvec = np.array([0.3, -1.2, 0.8])
        omega = 1.5 * np.linalg.norm(kvec)
        wave = lambda X: ad.cos(X[:, 1:2] * kvec[0] + X[:, 2:3] * kvec[1] + X[:, 3:4] * kvec[2] - omega * X[:, 0:1])
        d2 = vm.derivative(wave, txyz, 2)
        assert np.max(np.abs(ad.value_of(vm.dalembertian(d2, 0, c=1.5)))) <= 1e-10

    def test_dalembertian_of_time_square(self):
        d2 = self.second(lambda X: X[:, 0:1] ** 2)
        np.testing.assert_array_equal(ad.value_of(vm.dalembertian(d2, time_axis=0)), 2.0)

    def test_dalembertian_time_axis_checked(self):
        with pytest.raises(vm.AxisOutOfRange):
            vm.dalembertian(self.second(lambda X: X[:, 0:1]), time_axis=2)

    def test_speed_of_light_constant(self):
        assert vm.SPEED_OF_LIGHT_M_S == 299792458.0


class TestTensorHelpers:
    def test_diagonals_list_and_trace(self):
        d2 = vm.derivative(lambda X: X[:, 0:1] ** 2 + 3.0 * X[:, 1:2] ** 2, box((0, 1, 3), (0, 1, 3)), 2)
        diag = [ad.value_of(d) for d in vm.diagonals(d2)]
        np.testing.assert_array_equal(diag[0], 2.0)
        np.testing.assert_array_equal(diag[1], 6.0)
        np.testing.assert_array_equal(ad.value_of(vm.diagonals(d2, "trace")), 8.0)

    def test_first_order_diagonals(self):
        model = network.build([2, 4, 2], seed=2)
        d1 = derivative_stack(model, np.ones((3, 2)), 1)[1]
        diag = vm.diagonals(d1)
        assert [np.shape(ad.value_of(d)) for d in diag] == [(3, 1), (3, 1)]
        np.testing.assert_array_equal(ad.value_of(diag[1])[:, 0], d1.value[:, 1, 1])
        with pytest.raises(vm.DimensionMismatch):
            vm.diagonals(derivative_stack(network.build([2, 3, 1]), np.ones((3, 2)), 1)[1])

    def test_trace_equals_laplacian(self):
        model = network.build([3, 5, 2], seed=12)
        d2 = derivative_stack(model, np.random.default_rng(1).normal(size=(6, 3)), 2)[2]
        assert ad.value_of(vm.diagonals(d2, "trace")).tobytes() == ad.value_of(vm.laplacian(d2)).tobytes()

    def test_unstack_columns(self):
        t = np.arange(8.0).reshape(4, 2)
        cols = vm.unstack(t)
        assert len(cols) == 2
        np.testing.assert_array_equal(ad.value_of(cols[1]), t[:, 1:2])
        np.testing.assert_array_equal(np.hstack([ad.value_of(c) for c in cols]), t)

    def test_unstack_single_column(self):
        t = np.arange(4.0).reshape(4, 1)
        (only,) = vm.unstack(t)
        assert only is t

    def test_unstack_needs_matrix(self):
        with pytest.raises(vm.DimensionMismatch):
            vm.unstack(np.zeros(3))
