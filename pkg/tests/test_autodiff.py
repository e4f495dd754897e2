import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varnet import autodiff as ad
from varnet import network
from varnet.stack import derivative_stack

from .helpers import central_diff, rel_err


class TestElementary:
    def test_square_gradient(self):
        t = ad.Tape()
        x = t.var(3.0)
        assert ad.grad(x * x, [x]) == [6.0]

    def test_sin_gradient_at_zero(self):
        t = ad.Tape()
        x = t.var(0.0)
        assert ad.grad(ad.sin(x), [x]) == [1.0]

    def test_product_leaf(self):
        t = ad.Tape()
        x, y = t.var(1.5), t.var(2.0)
        assert ad.grad(x * y, [x]) == [2.0]

    def test_sigmoid_at_zero(self):
        t = ad.Tape()
        x = t.var(0.0)
        s = ad.sigmoid(x)
        assert s.value == 0.5
        assert ad.grad(s, [x]) == [0.25]

    def test_exp_gradient(self):
        t = ad.Tape()
        x = t.var(1.0)
        assert ad.grad(ad.exp(x), [x])[0] == pytest.approx(math.e, rel=1e-15)

    def test_sqrt_chain(self):
        t = ad.Tape()
        x = t.var(3.0)
        (g,) = ad.grad((1 + x**2) ** 0.5, [x])
        assert g == pytest.approx(3 / math.sqrt(10), rel=1e-14)
        fd = central_diff(lambda v: (1 + v * v) ** 0.5, 3.0)
        assert g == pytest.approx(fd, rel=1e-8)

    @pytest.mark.parametrize(
        "fn, x",
        [
            (ad.exp, 0.3),
            (ad.log, 1.7),
            (ad.sin, -0.4),
            (ad.cos, 2.1),
            (ad.tanh, 0.8),
            (ad.sigmoid, -1.2),
            (ad.sqrt, 2.5),
            (ad.absolute, -0.7),
            (ad.relu, 0.9),
            (lambda v: ad.power(v, 3.5), 1.3),
            (lambda v: 1.0 / v, 0.6),
            (lambda v: v - 2.0 * v * v, 0.2),
        ],
    )
    def test_matches_finite_difference(self, fn, x):
        t = ad.Tape()
        v = t.var(x)
        (g,) = ad.grad(fn(v), [v])
        fd = central_diff(lambda u: float(ad.value_of(fn(u))), x)
        assert rel_err(g, fd) <= 1e-5

    def test_division_by_zero_raises(self):
        t = ad.Tape()
        with pytest.raises(ad.DivisionByZero):
            t.var(1.0) / t.var(0.0)

    @pytest.mark.parametrize("fn", [ad.log, ad.sqrt])
    def test_domain_errors(self, fn):
        t = ad.Tape()
        with pytest.raises(ad.DomainError):
            fn(t.var(-1.0))

    def test_log_of_zero_raises(self):
        with pytest.raises(ad.DomainError):
            ad.log(ad.Tape().var(0.0))

    def test_negative_base_fractional_power(self):
        with pytest.raises(ad.DomainError):
            ad.power(ad.Tape().var(-2.0), 0.5)


class TestGrad:
    def test_sum_of_squares(self):
        t = ad.Tape()
        w = [t.var(v) for v in (0.5, -1.0, 2.0)]
        loss = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
        assert ad.grad(loss, w) == [1.0, -2.0, 4.0]

    def test_constant_loss(self):
        t = ad.Tape()
        w = [t.var(1.0), t.var(2.0)]
        c = t.var(5.0)
        assert ad.grad(c, w) == [0.0, 0.0]

    def test_unreached_target_is_zero(self):
        t = ad.Tape()
        x, y = t.var(1.0), t.var(2.0)
        assert ad.grad(x * 3.0, [x, y]) == [3.0, 0.0]

    def test_tape_mismatch(self):
        a, b = ad.Tape(), ad.Tape()
        x, y = a.var(1.0), b.var(2.0)
        with pytest.raises(ad.TapeMismatch):
            ad.grad(x * x, [y])
        with pytest.raises(ad.TapeMismatch):
            x + y

    def test_array_broadcasting(self):
        t = ad.Tape()
        x = t.var(np.arange(6.0).reshape(3, 2))
        b = t.var(np.array([1.0, -1.0]))
        loss = ((x + b) * (x + b)).sum()
        gx, gb = ad.grad(loss, [x, b])
        np.testing.assert_allclose(gx, 2 * (x.value + b.value))
        np.testing.assert_allclose(gb, (2 * (x.value + b.value)).sum(axis=0))

    def test_matmul_and_slicing(self):
        rng = np.random.default_rng(1)
        a0, w0 = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))

        def f(a, w):
            return (ad.matmul(a, w)[1:, 0] ** 2).sum()

        t = ad.Tape()
        a, w = t.var(a0), t.var(w0)
        ga, gw = ad.grad(f(a, w), [a, w])
        for arr, g, which in ((a0, ga, 0), (w0, gw, 1)):
            for idx in np.ndindex(arr.shape):
                def scalar(v, idx=idx, which=which):
                    aa, ww = a0.copy(), w0.copy()
                    (aa if which == 0 else ww)[idx] = v
                    return float(f(aa, ww))

                assert rel_err(g[idx], central_diff(scalar, arr[idx])) <= 1e-6

    def test_net_parameter_gradient_vs_finite_differences(self):
        model = network.build([1, 10, 1], seed=3)
        x = np.linspace(-1, 1, 5)[:, None]

        def loss_of(flat):
            m = model.copy()
            m.set_flat_parameters(flat)
            return float(np.sum(m(x) ** 2))

        t = ad.Tape()
        params = t.watch(model.parameters())
        loss = ad.reduce_sum(model(x, params) ** 2)
        g = np.concatenate([np.ravel(gi) for gi in ad.grad(loss, params)])
        flat = model.flat_parameters()
        fd = np.array([central_diff(lambda v, i=i: loss_of(np.where(np.arange(flat.size) == i, v, flat)), flat[i])
                       for i in range(flat.size)])
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)) <= 1e-5

    def test_replay_is_deterministic(self):
        def run():
            model = network.build([2, 6, 1], activation="tanh", seed=11)
            t = ad.Tape()
            params = t.watch(model.parameters())
            stack = derivative_stack(model, np.random.default_rng(0).normal(size=(7, 2)), 2, t, params)
            loss = ad.reduce_sum(stack[2][:, 0, 1] ** 2) + ad.reduce_sum(stack[0][:, 0])
            return [np.asarray(g).tobytes() for g in ad.grad(loss, params)]

        assert run() == run()


# -- randomized expressions ---------------------------------------------------

UNARY = {
    "sin": (ad.sin, np.sin),
    "cos": (ad.cos, np.cos),
    "tanh": (ad.tanh, np.tanh),
    "sigmoid": (ad.sigmoid, lambda v: 1 / (1 + np.exp(-v))),
    "exp_damped": (lambda v: ad.exp(-(v * v)), lambda v: np.exp(-(v * v))),
    "softsqrt": (lambda v: ad.sqrt(1.0 + v * v), lambda v: np.sqrt(1.0 + v * v)),
}
BINARY = {
    "add": (ad.add, np.add),
    "sub": (ad.sub, np.subtract),
    "mul": (ad.mul, np.multiply),
}


def expressions():
    leaf = st.builds(lambda i: ("leaf", i), st.integers(0, 2))
    return st.recursive(
        leaf,
        lambda sub: st.one_of(
            st.tuples(st.sampled_from(sorted(UNARY)), sub),
            st.tuples(st.sampled_from(sorted(BINARY)), sub, sub),
        ),
        max_leaves=12,
    )


def evaluate(expr, leaves, table):
    kind = expr[0]
    if kind == "leaf":
        return leaves[expr[1]]
    if kind in UNARY:
        return UNARY[kind][table](evaluate(expr[1], leaves, table))
    return BINARY[kind][table](evaluate(expr[1], leaves, table), evaluate(expr[2], leaves, table))


@settings(max_examples=60, deadline=None)
@given(expressions(), st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_random_expressions_match_finite_differences(expr, point):
    t = ad.Tape()
    leaves = [t.var(v) for v in point]
    out = evaluate(expr, leaves, 0)
    grads = ad.grad(out, leaves) if isinstance(out, ad.Var) else [0.0] * 3
    for i in range(3):
        def f(v, i=i):
            p = list(point)
            p[i] = v
            return float(evaluate(expr, p, 1))

        fd = central_diff(f, point[i])
        assert abs(grads[i] - fd) <= 1e-5 * max(abs(fd), 1.0)


class TestJet:
    def test_identity(self):
        j = ad.Jet.seed(np.array([[0.3], [1.2]]), 2)
        np.testing.assert_array_equal(j.partial((0,)), [[1.0], [1.0]])
        np.testing.assert_array_equal(j.partial((0, 0)), [[0.0], [0.0]])

    def test_sin(self):
        j = ad.sin(ad.Jet.seed(np.array([[math.pi / 4]]), 2))
        assert j.partial((0,))[0, 0] == pytest.approx(math.cos(math.pi / 4), rel=1e-15)
        assert j.partial((0, 0))[0, 0] == pytest.approx(-math.sin(math.pi / 4), rel=1e-15)

    @pytest.mark.parametrize(
        "fn, d",
        [
            (ad.exp, [math.exp(0.7)] * 5),
            (ad.log, [1 / 0.7, -1 / 0.7**2, 2 / 0.7**3, -6 / 0.7**4]),
            (ad.cos, [-math.sin(0.7), -math.cos(0.7), math.sin(0.7), math.cos(0.7)]),
            (lambda v: v**3, [3 * 0.49, 6 * 0.7, 6.0, 0.0]),
            (lambda v: 1.0 / v, [-1 / 0.49, 2 / 0.7**3, -6 / 0.7**4, 24 / 0.7**5]),
        ],
    )
    def test_known_derivatives_to_fourth_order(self, fn, d):
        j = fn(ad.Jet.seed(np.array([[0.7]]), 4))
        for k in range(1, 5):
            assert float(np.squeeze(j.partial((0,) * k))) == pytest.approx(d[k - 1], rel=1e-12, abs=1e-14)

    @pytest.mark.parametrize("name", ["tanh", "sigmoid"])
    def test_chain_polynomials_match_sympy(self, name):
        sympy = pytest.importorskip("sympy")
        x = sympy.symbols("x")
        expr = sympy.tanh(x) if name == "tanh" else 1 / (1 + sympy.exp(-x))
        j = getattr(ad, name)(ad.Jet.seed(np.array([[0.35]]), 4))
        for k in range(1, 5):
            want = float(sympy.diff(expr, x, k).subs(x, 0.35))
            assert float(np.squeeze(j.partial((0,) * k))) == pytest.approx(want, rel=1e-12, abs=1e-15)

    def test_tanh_net_matches_finite_differences(self):
        model = network.build([1, 3, 1], activation="tanh", seed=5)
        x0 = 0.7
        j = model(ad.Jet.seed(np.array([[x0]]), 2))
        f = lambda v: float(model(np.array([[v]]))[0, 0])
        d1 = central_diff(f, x0)
        d2 = (f(x0 + 1e-4) - 2 * f(x0) + f(x0 - 1e-4)) / 1e-8
        assert rel_err(float(np.squeeze(j.partial((0,)))), d1) <= 1e-4
        assert rel_err(float(np.squeeze(j.partial((0, 0)))), d2) <= 1e-4

    def test_mixed_partials_are_one_object(self):
        j = ad.Jet.seed(np.array([[1.0, 2.0, 3.0]]), 3)
        f = j[:, 0:1] * ad.sin(j[:, 1:2]) * ad.exp(j[:, 2:3])
        assert f.partial((2, 0, 1)) is f.partial((0, 1, 2))
        assert f.partial((1, 0)) is f.partial((0, 1))

    def test_order_mismatch(self):
        a = ad.Jet.seed(np.array([[1.0]]), 1)
        b = ad.Jet.seed(np.array([[1.0]]), 2)
        with pytest.raises(ad.OrderMismatch):
            a * b

    def test_order_unsupported(self):
        with pytest.raises(ad.OrderUnsupported):
            ad.Jet.seed(np.array([[1.0]]), ad.MAX_ORDER + 1)

    def test_faa_di_bruno_term_counts(self):
        # univariate coefficients are Stirling-type: d3 g(u) = g'''u'^3 + 3g''u'u'' + g'u'''
        terms = {blocks: c for c, blocks in ad.faa_di_bruno_terms((0, 0, 0))}
        assert terms == {((0, 0, 0),): 1, ((0,), (0, 0)): 3, ((0,), (0,), (0,)): 1}
        # number of set partitions of 4 labelled items is the Bell number 15
        assert sum(c for c, _ in ad.faa_di_bruno_terms((0, 1, 2, 3))) == 15

    def test_input_derivative_is_parameter_differentiable(self):
        # d/dw of d/dx [sigmoid(w x + b)] against finite differences in w
        x0, w0, b0 = 0.4, 1.3, -0.2

        def dydx(w):
            s = 1 / (1 + math.exp(-(w * x0 + b0)))
            return w * s * (1 - s)

        t = ad.Tape()
        w, b = t.var(w0), t.var(b0)
        j = ad.sigmoid(ad.Jet.seed(np.array([[x0]]), 1) * w + b)
        (g,) = ad.grad(ad.reduce_sum(j.partial((0,))), [w])
        assert rel_err(g, central_diff(dydx, w0)) <= 1e-4


class TestJetJoins:
    def test_stack_keeps_partials(self):
        x = np.random.default_rng(0).normal(size=(4, 2))
        j = ad.Jet.seed(x, 2)
        field = ad.stack([ad.neg(j[:, 1]), j[:, 0] * j[:, 0]], axis=1)
        np.testing.assert_array_equal(ad.value_of(field.partial((1,)))[:, 0], -1.0)
        np.testing.assert_array_equal(ad.value_of(field.partial((0,)))[:, 1], 2 * x[:, 0])
        np.testing.assert_array_equal(ad.value_of(field.partial((0, 0)))[:, 1], 2.0)

    def test_concatenate_mixes_constants(self):
        j = ad.Jet.seed(np.array([[1.0], [2.0]]), 1)
        out = ad.concatenate([j, np.zeros((2, 1)), 3.0 * j], axis=1)
        np.testing.assert_array_equal(ad.value_of(out.partial((0,))), [[1.0, 0.0, 3.0]] * 2)

    def test_reshape_is_componentwise(self):
        j = ad.sin(ad.Jet.seed(np.array([[0.1], [0.2]]), 1))
        flat = ad.reshape(j, (2,))
        assert np.shape(ad.value_of(flat.partial((0,)))) == (2,)

    def test_join_order_mismatch(self):
        with pytest.raises(ad.OrderMismatch):
            ad.stack([ad.Jet.seed(np.ones((1, 1)), 1), ad.Jet.seed(np.ones((1, 1)), 2)], axis=1)
