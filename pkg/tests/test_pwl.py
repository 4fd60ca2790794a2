import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ritzkit.checks import pwl_check, support_violations
from ritzkit.net import ShapeError, forward, init, input_gradient
from ritzkit.pwl import (
    Breakpoints1D,
    InvalidBreakpoints,
    affine_network,
    bump,
    bump_gradient,
    hat_breakpoints,
    interpolant_breakpoints,
    kuhn_interpolant,
    max_depth,
    pwl_to_network_1d,
    relu_max,
    relu_min,
    sobolev_error,
)


def test_hat_network_exact():
    net = pwl_to_network_1d(hat_breakpoints())
    assert net.depth == 2
    x = np.array([-1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0])
    assert forward(net, x).tolist() == [0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0]
    X = np.random.default_rng(0).uniform(-1, 2, size=10_000)
    assert np.max(np.abs(forward(net, X) - hat_breakpoints()(X))) <= 1e-15


def test_affine_breakpoints():
    bp = Breakpoints1D.affine(2.0, -1.0)
    net = pwl_to_network_1d(bp)
    assert net.depth == 2
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(forward(net, x), 2 * x - 1, atol=1e-14)


def test_outer_slopes_continue():
    bp = Breakpoints1D([0.0, 1.0, 3.0], [1.0, -1.0, 2.0], left_slope=-0.5, right_slope=3.0)
    net = pwl_to_network_1d(bp)
    x = np.array([-4.0, 0.5, 2.0, 5.0])
    want = [3.0, 0.0, 0.5, 8.0]
    np.testing.assert_allclose(bp(x), want)
    np.testing.assert_allclose(forward(net, x), want, atol=1e-13)
    np.testing.assert_allclose(bp.derivative(np.array([-1.0, 0.5, 2.0, 4.0])), [-0.5, -2.0, 1.5, 3.0])


@pytest.mark.parametrize("knots,values", [([0.0, 0.0, 1.0], [0, 1, 0]), ([1.0, 0.5], [0, 0]), ([], []), ([0.0], [1.0, 2.0])])
def test_invalid_breakpoints(knots, values):
    with pytest.raises(InvalidBreakpoints):
        Breakpoints1D(knots, values)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=12, unique=True),
       st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_breakpoint_networks_are_exact(knots, ls, rs, seed):
    knots = np.sort(np.array(knots))
    if knots.size > 1 and np.min(np.diff(knots)) < 1e-3:
        return
    rng = np.random.default_rng(seed)
    bp = Breakpoints1D(knots, rng.normal(size=knots.size), ls, rs)
    net = pwl_to_network_1d(bp)
    x = rng.uniform(-20, 20, size=500)
    want = bp(x)
    scale = 1.0 + np.max(np.abs(want)) + np.max(np.abs(bp.slopes)) * 20
    assert np.max(np.abs(forward(net, x) - want)) <= 1e-12 * scale


def test_relu_max_abs():
    net = relu_max([affine_network([1.0], 0.0), affine_network([-1.0], 0.0)])
    assert net.depth == 2
    x = np.linspace(-3, 3, 13)
    assert forward(net, x).tolist() == np.abs(x).tolist()


def test_max_and_min_of_three_affines():
    W = np.array([[1.0, -0.5], [-0.75, 0.25], [0.3, 1.2]])
    c = np.array([0.1, -0.2, 0.05])
    nets = [affine_network(w, b) for w, b in zip(W, c)]
    hi, lo = relu_max(nets), relu_min(nets)
    assert hi.depth == lo.depth == max_depth([1, 1, 1]) == 3
    X = np.random.default_rng(1).uniform(-2, 2, size=(10_000, 2))
    V = X @ W.T + c
    assert np.max(np.abs(forward(hi, X) - V.max(axis=1))) <= 1e-13
    assert np.max(np.abs(forward(lo, X) - V.min(axis=1))) <= 1e-13


def test_relu_max_single_and_errors():
    net = init([2, 4, 1], 0)
    assert relu_max([net]) is net
    with pytest.raises(ShapeError):
        relu_max([affine_network([1.0], 0.0), affine_network([1.0, 2.0], 0.0)])
    with pytest.raises(ValueError):
        relu_max([])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5))
def test_relu_max_of_networks(seed, k):
    rng = np.random.default_rng(seed)
    nets = [init([2, int(rng.integers(1, 5))] * int(rng.integers(1, 3)) + [1], seed + i) for i in range(k)]
    hi = relu_max(nets)
    assert hi.depth == max_depth([n.depth for n in nets])
    X = rng.normal(size=(200, 2))
    want = np.max([forward(n, X) for n in nets], axis=0)
    np.testing.assert_allclose(forward(hi, X), want, atol=1e-12, rtol=1e-12)


def test_pwl_check_fixtures():
    rows = pwl_check()
    assert [r["fixture"] for r in rows] == ["hat", "sine17", "max3", "min3"]
    assert all(r["ok"] for r in rows)
    assert all(r["max_scaled_dev"] <= 1e-12 for r in rows)


# Kuhn interpolation


def test_interpolant_matches_vertices():
    phi = lambda X: np.cos(X).sum(axis=1)
    interp = kuhn_interpolant(phi, 0.25, ([-1, -1], [1, 1]))
    V = interp.vertices()
    inner = np.all((V > interp.origin) & (V < interp.upper), axis=1)
    np.testing.assert_allclose(interp(V[inner]), phi(V[inner]), atol=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_affine_functions_reproduced(d):
    w = np.arange(1, d + 1) * 0.7
    phi = lambda X: X @ w + 0.3
    interp = kuhn_interpolant(phi, 0.2, (-np.ones(d), np.ones(d)))
    X = np.random.default_rng(d).uniform(-1.1, 1.1, size=(500, d))
    np.testing.assert_allclose(interp(X), phi(X), atol=1e-12)
    np.testing.assert_allclose(interp.gradient(X), np.broadcast_to(w, X.shape), atol=1e-11)


def test_continuity_across_faces():
    interp = kuhn_interpolant(bump, 0.2, ([-1, -1, -1], [1, 1, 1]))
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(2000, 3))
    # snap one coordinate per point onto a grid plane, then perturb across it
    k = rng.integers(0, 3, 2000)
    X[np.arange(2000), k] = interp.origin[k] + 0.2 * np.round((X[np.arange(2000), k] - interp.origin[k]) / 0.2)
    e = np.zeros_like(X)
    e[np.arange(2000), k] = 1e-9
    assert np.max(np.abs(interp(X + e) - interp(X - e))) <= 1e-7
    # diagonal faces inside a cell
    Y = rng.uniform(-1, 1, size=(2000, 3))
    Y[:, 1] = Y[:, 0] + 0.2 * np.round((Y[:, 1] - Y[:, 0]) / 0.2)
    f = np.array([1e-9, -1e-9, 0.0])
    assert np.max(np.abs(interp(Y + f) - interp(Y - f))) <= 1e-7


@pytest.mark.parametrize("d", [1, 2])
def test_support_containment(d):
    for delta in (0.4, 0.1):
        interp = kuhn_interpolant(bump, delta, (-np.ones(d), np.ones(d)))
        assert support_violations(interp, delta) == 0
        outside = interp.upper + 0.5
        assert interp(outside[None])[0] == 0.0


def test_interpolant_invalid_delta():
    for delta in (0.0, -0.1):
        with pytest.raises(ValueError):
            kuhn_interpolant(bump, delta, ([-1], [1]))


def test_sobolev_error_zero_for_identity_data():
    phi = lambda X: np.maximum(0.0, 1 - np.abs(X[:, 0]))
    dphi = lambda X: (-np.sign(X[:, :1])) * (np.abs(X[:, :1]) < 1)
    interp = kuhn_interpolant(phi, 0.25, ([-1], [1]))
    lp, w1p = sobolev_error(phi, dphi, interp, 2.0)
    assert lp <= 1e-10 and w1p <= 1e-10


def test_sobolev_error_resolution_guard():
    interp = kuhn_interpolant(bump, 0.05, ([-1], [1]))
    with pytest.raises(ValueError):
        sobolev_error(bump, bump_gradient, interp, 2.0, resolution=64)


def test_sobolev_error_p_inf_and_order():
    errs = []
    for delta in (0.2, 0.1, 0.05):
        interp = kuhn_interpolant(bump, delta, ([-1], [1]))
        lp, w1p = sobolev_error(bump, bump_gradient, interp, math.inf)
        assert lp <= w1p
        errs.append(sobolev_error(bump, bump_gradient, interp, 2.0))
    assert errs[2][0] < errs[1][0] < errs[0][0]
    assert errs[2][1] / errs[1][1] <= 0.75


def test_one_dimensional_pipeline():
    interp = kuhn_interpolant(bump, 0.1, ([-1], [1]))
    net = pwl_to_network_1d(interpolant_breakpoints(interp))
    x = np.random.default_rng(3).uniform(-2, 2, size=4000)
    np.testing.assert_allclose(forward(net, x), interp(x[:, None]), atol=1e-14)
    X = x[:, None]
    np.testing.assert_allclose(input_gradient(net, X), interp.gradient(X), atol=1e-11)
    with pytest.raises(ShapeError):
        interpolant_breakpoints(kuhn_interpolant(bump, 0.5, ([-1, -1], [1, 1])))


def test_bump_gradient_matches_finite_differences():
    X = np.random.default_rng(0).uniform(-0.9, 0.9, size=(100, 2)) / math.sqrt(2)
    h = 1e-6
    fd = np.stack([(bump(X + h * e) - bump(X - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    np.testing.assert_allclose(bump_gradient(X), fd, atol=1e-7)
