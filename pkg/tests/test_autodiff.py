import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ritzkit import autodiff as ad
from ritzkit.checks import gradcheck_net, relative_error
from ritzkit.net import NetworkParams, activation_pattern, forward, input_gradient, zeros

from test_net import abs_net, random_net


def test_polynomial_gradient():
    tape = ad.Tape()
    x = tape.variable(3.0)
    y = x * x
    (g,) = tape.gradients(y, [x])
    assert g == 6.0


def test_elementary_ops():
    tape = ad.Tape()
    a = tape.variable(np.array([1.0, -2.0, 3.0]))
    b = tape.variable(np.array([0.5, 4.0, -1.0]))
    out = ad.total(ad.maximum(a, b) + a / b - ad.relu(a) * 2.0 + ad.abs_pow(b, 3.0))
    ga, gb = tape.gradients(out, [a, b])
    # d/da: [a>b] + 1/b - 2[a>0];  d/db: [b>=a] - a/b^2 + 3|b| b
    np.testing.assert_allclose(ga, [1 + 2 - 2, 0 + 0.25 - 0, 1 - 1 - 2])
    np.testing.assert_allclose(gb, [0 - 4 + 0.75, 1 + 0.125 + 48, 0 - 3 - 3])


def test_linear_net_dirichlet_gradient():
    # u(x) = a . x has grad_x u = a, so d/da of |a|^2 / 2 is a
    a = np.array([[0.7, -1.3]])
    net = NetworkParams(((a, np.zeros(1)),))
    tape = ad.Tape()
    traced = tape.watch(net)
    dual = ad.forward_with_input_tangents(traced, np.array([[0.2, 0.4]]))
    loss = 0.5 * ad.total(ad.norm_pow(dual.tangent, 2.0, axis=1))
    gA, gb = tape.gradients(loss, traced.leaves())
    np.testing.assert_allclose(gA, a)
    assert gb == 0


def test_dirichlet_integrand_matches_finite_differences():
    net = random_net(7, d=2, width=8, depth=3)
    x = np.array([[0.3, -0.2]])
    f = 1.7

    def loss(n):
        dual = ad.forward_with_input_tangents(n, x)
        return ad.total(0.5 * ad.norm_pow(dual.tangent, 2.0, axis=1) - f * dual.primal)

    g = ad.grad_params(loss, net)
    theta = net.flat()
    h = 1e-6
    plain = lambda p: 0.5 * np.sum(input_gradient(p, x) ** 2) - f * forward(p, x)[0]
    fd = np.empty_like(theta)
    pattern = activation_pattern(net, x)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        assert np.array_equal(activation_pattern(net.with_flat(theta + e), x), pattern)
        fd[j] = (plain(net.with_flat(theta + e)) - plain(net.with_flat(theta - e))) / (2 * h)
    assert np.max(relative_error(g, fd)) <= 1e-5


def test_forward_with_input_tangents_examples():
    dual = ad.forward_with_input_tangents(abs_net(), np.array([2.0]))
    assert dual.primal.value.tolist() == [2.0] and dual.tangent.value.tolist() == [[1.0]]
    dual = ad.forward_with_input_tangents(zeros([3, 4, 1]), np.ones((2, 3)))
    assert np.all(dual.primal.value == 0) and np.all(dual.tangent.value == 0)


def test_tangent_consistency_random_nets():
    rng = np.random.default_rng(0)
    for k in range(100):
        d = 1 + k % 3
        net = random_net(k, d=d, width=1 + k % 9, depth=2 + k % 3)
        X = rng.normal(size=(3, d))
        dual = ad.forward_with_input_tangents(net, X)
        np.testing.assert_array_equal(dual.primal.value, forward(net, X))
        np.testing.assert_allclose(dual.tangent.value, input_gradient(net, X), rtol=1e-14, atol=1e-14)


def test_kink_width_changes_only_derivatives():
    net = random_net(1, d=1, width=6, depth=2)
    X = np.linspace(-1, 1, 50)[:, None]
    a = ad.forward_with_input_tangents(net, X, 0.0)
    b = ad.forward_with_input_tangents(net, X, 0.05)
    np.testing.assert_array_equal(a.tangent.value, b.tangent.value)

    def loss(kw):
        return lambda n: ad.total(ad.norm_pow(ad.forward_with_input_tangents(n, X, kw).tangent, 2.0, axis=1))

    assert not np.allclose(ad.grad_params(loss(0.0), net), ad.grad_params(loss(0.05), net))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_linearity(seed, alpha, beta):
    net = random_net(seed, d=2, width=5, depth=3)
    X = np.random.default_rng(seed).normal(size=(6, 2))
    l1 = lambda n: ad.total(ad.forward_traced(n, X))
    l2 = lambda n: ad.total(ad.norm_pow(ad.forward_with_input_tangents(n, X).tangent, 3.0, axis=1))
    both = lambda n: alpha * l1(n) + beta * l2(n)
    np.testing.assert_allclose(
        ad.grad_params(both, net), alpha * ad.grad_params(l1, net) + beta * ad.grad_params(l2, net),
        rtol=1e-12, atol=1e-12,
    )


def test_replay_is_bitwise_identical():
    net = random_net(9)
    X = np.random.default_rng(1).normal(size=(20, 2))
    loss = lambda n: ad.total(ad.norm_pow(ad.forward_with_input_tangents(n, X).tangent, 2.0, axis=1))
    assert ad.grad_params(loss, net).tobytes() == ad.grad_params(loss, net).tobytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_reports_record():
    tape = ad.Tape()
    x = tape.variable(np.array([0.0]))
    with pytest.raises(ad.NumericError) as err:
        ad.div(1.0, x)
    assert err.value.index == 1 and err.value.stage == "forward"
    y = tape.variable(np.array([1e300]))
    with pytest.raises(ad.NumericError):
        y * y


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_reverse_nonfinite_detected():
    tape = ad.Tape()
    x = tape.variable(np.array([1e-300]))
    out = ad.total(ad.div(1.0, x) * 0.0)
    with pytest.raises(ad.NumericError) as err:
        tape.gradients(out, [x])
    assert err.value.stage == "reverse"


def test_gradients_require_scalar_and_same_tape():
    tape = ad.Tape()
    x = tape.variable(np.ones(3))
    with pytest.raises(ValueError):
        tape.gradients(x * 2.0, [x])
    other = ad.Tape()
    with pytest.raises(ValueError):
        other.gradients(ad.total(x), [x])


def test_unused_leaf_gets_zero_gradient():
    tape = ad.Tape()
    x, y = tape.variable(2.0), tape.variable(np.ones(2))
    gx, gy = tape.gradients(x * x, [x, y])
    assert gx == 4.0 and np.all(gy == 0)


def test_topological_order():
    net = random_net(0)
    tape = ad.Tape()
    traced = tape.watch(net)
    ad.forward_with_input_tangents(traced, np.ones((3, 2)))
    assert all(p < i for i, rec in enumerate(tape.records) for p in rec.parents)


def test_gradcheck_energy_small():
    r = gradcheck_net(123, 2, 3, 8)
    assert r.max_rel_error <= 1e-5
    bad = gradcheck_net(123, 2, 3, 8, flip_sign=True)
    assert bad.max_rel_error > 1.0
