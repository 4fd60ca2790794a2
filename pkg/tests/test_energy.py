import math

import numpy as np
import pytest

from ritzkit import autodiff as ad
from ritzkit.checks import hat_network
from ritzkit.energy import (
    EnergySpec,
    PolynomialSource,
    estimate_interior,
    estimate_on_batches,
    estimate_penalty,
    estimate_total,
    make_source,
    one_source,
    quadrature_energy,
    zero_source,
)
from ritzkit.geometry import Hypercube, Interval, sample_boundary, sample_interior
from ritzkit.net import NetworkParams, forward, input_gradient, zeros

from test_net import random_net

UNIT = Interval(0.0, 1.0)


def identity_net():
    return NetworkParams(((np.array([[1.0]]), np.zeros(1)),))


def constant_net(c, d=2):
    return NetworkParams(((np.zeros((1, d)), np.array([float(c)])),))


def test_spec_validation():
    with pytest.raises(ValueError):
        EnergySpec(UNIT, p=1.0)
    with pytest.raises(ValueError):
        EnergySpec(UNIT, penalty=-1.0)


def test_zero_network():
    spec = EnergySpec(UNIT, one_source, 2.0, 10.0)
    net = zeros([1, 4, 1])
    assert estimate_interior(net, spec, sample_interior(UNIT, 100, 0)) == 0.0
    assert estimate_total(net, spec, 100, 10, 0).total == 0.0


def test_hat_dirichlet_exact():
    spec = EnergySpec(UNIT, zero_source, 2.0)
    values = [estimate_interior(hat_network(), spec, sample_interior(UNIT, 257, s)) for s in range(5)]
    assert values == [2.0] * 5


def test_hat_total_with_penalty_matches_expectation():
    spec = EnergySpec(UNIT, one_source, 2.0, 10.0)
    est = [estimate_total(hat_network(), spec, 2048, 8, s) for s in np.random.SeedSequence(3).spawn(50)]
    assert all(e.penalty == 0.0 for e in est)
    totals = np.array([e.total for e in est])
    assert abs(totals.mean() - 1.5) <= 3 * totals.std(ddof=1) / math.sqrt(50)


def test_penalty_examples():
    spec = EnergySpec(UNIT, penalty=1.0)
    b = sample_boundary(UNIT, 2, 0)
    assert estimate_penalty(identity_net(), spec, b) == 1.0
    assert estimate_penalty(identity_net(), spec.with_penalty(0.0), b) == 0.0
    assert estimate_penalty(identity_net(), spec.with_penalty(2.0), b) == 2.0
    sq = Hypercube(0, 1, 2)
    c = 0.3
    for M in (1, 7, 100):
        val = estimate_penalty(constant_net(c), EnergySpec(sq, penalty=5.0), sample_boundary(sq, M, M))
        assert val == pytest.approx(5 * 4 * c * c, rel=1e-14)


def test_penalty_linear_in_lambda():
    net = random_net(5, d=2, width=6, depth=3)
    sq = Hypercube(0, 1, 2)
    b = sample_boundary(sq, 64, 1)
    base = estimate_penalty(net, EnergySpec(sq, penalty=1.0), b)
    assert base > 0
    for lam in (0.5, 3.0, 1000.0):
        assert estimate_penalty(net, EnergySpec(sq, penalty=lam), b) == pytest.approx(lam * base, rel=1e-15)


def test_general_p_penalty_is_squared_norm():
    net = random_net(5, d=2, width=6, depth=3)
    sq = Hypercube(0, 1, 2)
    b = sample_boundary(sq, 64, 1)
    u = forward(net, b.points)
    expected = 2.0 * (b.weight * np.sum(np.abs(u) ** 4)) ** 0.5
    assert estimate_penalty(net, EnergySpec(sq, p=4.0, penalty=2.0), b) == pytest.approx(expected, rel=1e-13)


def test_interior_formula_general_p():
    net = random_net(8, d=2, width=5, depth=3)
    sq = Hypercube(0, 1, 2)
    f = PolynomialSource([(1.0, [1, 0]), (2.0, [0, 2])])
    spec = EnergySpec(sq, f, 3.0)
    batch = sample_interior(sq, 50, 2)
    X = batch.points
    G = input_gradient(net, X)
    expected = batch.weight * np.sum(np.linalg.norm(G, axis=1) ** 3 / 3 - f(X) * forward(net, X))
    assert estimate_interior(net, spec, batch) == pytest.approx(expected, rel=1e-13)


def test_total_is_sum_of_parts():
    spec = EnergySpec(Hypercube(0, 1, 2), one_source, 2.0, 7.0)
    e = estimate_total(random_net(1), spec, 64, 32, 9)
    assert e.total == e.interior + e.penalty
    assert e.N == 64 and e.M == 32 and e.stderr > 0


def test_total_deterministic_per_seed():
    spec = EnergySpec(Hypercube(0, 1, 2), one_source, 2.0, 7.0)
    a = estimate_total(random_net(1), spec, 64, 32, 9)
    b = estimate_total(random_net(1), spec, 64, 32, 9)
    ss = np.random.SeedSequence(9)
    c = estimate_total(random_net(1), spec, 64, 32, ss)
    d = estimate_total(random_net(1), spec, 64, 32, ss)
    assert a.total == b.total and c.total == d.total


def test_traced_and_plain_agree():
    spec = EnergySpec(Hypercube(0, 1, 2), one_source, 2.0, 3.0)
    net = random_net(4)
    bi, bb = sample_interior(spec.domain, 32, 0), sample_boundary(spec.domain, 16, 1)
    plain = estimate_on_batches(net, spec, bi, bb)
    traced = estimate_on_batches(ad.Tape().watch(net), spec, bi, bb)
    assert float(traced.total.value) == plain.total


def test_sources():
    X = np.array([[2.0], [3.0]])
    assert make_source([1, 0, 1])(X).tolist() == [5.0, 10.0]
    assert make_source(2.5)(X).tolist() == [2.5, 2.5]
    assert make_source("one")(X).tolist() == [1.0, 1.0]
    np.testing.assert_allclose(make_source("poisson_1d_sine")(np.array([[0.5]])), [math.pi ** 2])
    with pytest.raises(KeyError):
        make_source("nope")


def test_quadrature_energy_examples():
    pi = math.pi
    u = lambda X: np.sin(pi * X[:, 0])
    du = lambda X: pi * np.cos(pi * X[:, :1])
    assert abs(quadrature_energy(u, du, EnergySpec(UNIT), 4096) - pi ** 2 / 4) <= 1e-6
    spec = EnergySpec(UNIT, lambda X: pi ** 2 * np.sin(pi * X[:, 0]))
    assert quadrature_energy(u, du, spec, 4096) == pytest.approx(-pi ** 2 / 4, abs=1e-6)
    assert quadrature_energy(lambda X: 0 * X[:, 0], lambda X: 0 * X, spec) == 0.0
    with pytest.raises(ValueError):
        quadrature_energy(u, du, spec, 32)


def test_quadrature_agrees_with_monte_carlo():
    net = random_net(6, d=2, width=6, depth=3)
    sq = Hypercube(0, 1, 2)
    spec = EnergySpec(sq, one_source, 2.0, 2.0)
    q = quadrature_energy(lambda X: forward(net, X), lambda X: input_gradient(net, X), spec, 512)
    e = estimate_total(net, spec, 1 << 16, 1 << 14, 0)
    assert abs(e.total - q) <= 3 * e.stderr
