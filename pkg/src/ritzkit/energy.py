"""Monte-Carlo estimators of penalised p-Dirichlet energies.

For a network ``u`` the penalised energy is

    (1/p) int_Omega |grad u|^p dx - int_Omega f u dx + lam * ||u||_{L^p(boundary)}^2

which for ``p = 2`` is the regularised Dirichlet energy of the Poisson
problem.  Every estimator accepts either :class:`~ritzkit.net.NetworkParams`
(returns floats) or a :class:`~ritzkit.autodiff.TracedNetwork` (returns tape
records, so the result can be differentiated with respect to the parameters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import autodiff as ad
from .geometry import Domain, SampleBatch, sample_boundary, sample_interior
from .net import NetworkParams, forward
from .quadrature import boundary_nodes, integrate, interior_nodes


def zero_source(X):
    return np.zeros(X.shape[0])


def one_source(X):
    return np.ones(X.shape[0])


class PolynomialSource:
    """Polynomial source term from a list of ``(coefficient, exponents)`` terms.

    A flat list of numbers is read as coefficients of powers of ``x_1``:
    ``[c0, c1, c2]`` means ``c0 + c1 x_1 + c2 x_1^2``.
    """

    def __init__(self, terms):
        terms = list(terms)
        if terms and all(isinstance(t, (int, float)) for t in terms):
            terms = [(c, [k]) for k, c in enumerate(terms)]
        self.terms = [(float(c), [int(e) for e in exps]) for c, exps in terms]

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for c, exps in self.terms:
            mono = np.full(X.shape[0], c)
            for k, e in enumerate(exps):
                if e:
                    mono = mono * X[:, k] ** e
            out += mono
        return out

    def __repr__(self):
        return f"PolynomialSource({self.terms})"


SOURCES: dict[str, Callable] = {"zero": zero_source, "one": one_source}


def make_source(value) -> Callable:
    """Resolve a source from a registry name, a polynomial coefficient list, a number or a callable."""
    if callable(value):
        return value
    if isinstance(value, str):
        if value in SOURCES:
            return SOURCES[value]
        from .cases import manufactured_registry

        cases = {c.name: c for c in manufactured_registry()}
        if value in cases:
            return cases[value].f
        raise KeyError(f"unknown source {value!r}")
    if isinstance(value, (int, float)):
        return PolynomialSource([float(value)])
    return PolynomialSource(value)


@dataclass(frozen=True)
class EnergySpec:
    """Penalised energy: exponent ``p``, boundary penalty weight, source term and domain."""

    domain: Domain
    source: Callable = zero_source
    p: float = 2.0
    penalty: float = 0.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        object.__setattr__(self, "source", make_source(self.source))

    def with_penalty(self, penalty: float) -> "EnergySpec":
        return EnergySpec(self.domain, self.source, self.p, penalty)


@dataclass(frozen=True)
class EnergyEstimate:
    """Interior and penalty parts of one energy estimate.

    Fields are floats for plain parameters and tape records for traced ones.
    ``stderr`` is the Monte-Carlo standard error of ``total``.
    """

    interior: Any
    penalty: Any
    total: Any
    N: int
    M: int
    seed: Any = None
    stderr: float = float("nan")


def _interior_integrand(net, spec: EnergySpec, X, kink_width: float = 0.0):
    dual = ad.forward_with_input_tangents(net, X, kink_width)
    f = spec.source(X)
    return (1.0 / spec.p) * ad.norm_pow(dual.tangent, spec.p, axis=1) - dual.primal * f


def _boundary_sum(net, spec: EnergySpec, batch: SampleBatch):
    u = ad.forward_traced(net, batch.points)
    if spec.p == 2:
        return batch.weight * ad.total(u * u)
    inner = batch.weight * ad.total(ad.abs_pow(u, spec.p))
    return ad.power(inner, 2.0 / spec.p)


def _plain(fn):
    """Run a traced estimator on a fresh tape when given plain parameters."""

    def wrapper(params, *args, **kwargs):
        if isinstance(params, NetworkParams):
            out = fn(ad.Tape().watch(params), *args, **kwargs)
            return float(out.value)
        return fn(params, *args, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_plain
def estimate_interior(params, spec: EnergySpec, batch: SampleBatch):
    """``weight * sum_i [(1/p)|grad u(x_i)|^p - f(x_i) u(x_i)]`` over an interior batch."""
    return batch.weight * ad.total(_interior_integrand(params, spec, batch.points))


@_plain
def estimate_penalty(params, spec: EnergySpec, batch: SampleBatch):
    """Penalty ``lam * (weight * sum_j |u(s_j)|^p)^(2/p)`` over a boundary batch.

    For ``p = 2`` this is ``lam * weight * sum_j u(s_j)^2``.
    """
    return spec.penalty * _boundary_sum(params, spec, batch)


def batch_seeds(seed):
    """Independent interior and boundary seeds derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # derived by key rather than spawn(), which mutates ss and would change on every call
    return tuple(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,)) for k in range(2))


def estimate_total(params, spec: EnergySpec, N: int, M: int, seed) -> EnergyEstimate:
    """Fresh interior/boundary batches from ``seed``, combined into one estimate."""
    si, sb = batch_seeds(seed)
    return estimate_on_batches(
        params, spec, sample_interior(spec.domain, N, si), sample_boundary(spec.domain, M, sb), seed
    )


def estimate_on_batches(
    params,
    spec: EnergySpec,
    interior: SampleBatch,
    boundary: SampleBatch,
    seed=None,
    with_stderr: bool = True,
    kink_width: float = 0.0,
) -> EnergyEstimate:
    """Estimate on given batches; ``kink_width`` only affects derivatives (see ``autodiff.masked_tangent``)."""
    net = ad.Tape().watch(params) if isinstance(params, NetworkParams) else params
    g = _interior_integrand(net, spec, interior.points, kink_width)
    e_int = interior.weight * ad.total(g)
    e_pen = spec.penalty * _boundary_sum(net, spec, boundary)
    e_tot = e_int + e_pen
    stderr = _stderr(net, spec, g.value, interior, boundary) if with_stderr else float("nan")
    if isinstance(params, NetworkParams):
        e_int, e_pen, e_tot = float(e_int.value), float(e_pen.value), float(e_tot.value)
    return EnergyEstimate(e_int, e_pen, e_tot, len(interior), len(boundary), seed, stderr)


def _stderr(net, spec, g, interior, boundary) -> float:
    n = g.shape[0]
    var = interior.weight ** 2 * n * (g.var(ddof=1) if n > 1 else 0.0)
    m = len(boundary)
    if spec.penalty > 0 and m > 2:
        u = forward(net.params, boundary.points)
        terms = np.abs(u) ** spec.p
        inner = boundary.weight * terms.sum()
        # delta method for s -> s^(2/p)
        slope = (2.0 / spec.p) * inner ** (2.0 / spec.p - 1.0) if inner > 0 else 0.0
        var += (spec.penalty * slope * boundary.weight) ** 2 * m * terms.var(ddof=1)
    return math.sqrt(var)


def quadrature_energy(u: Callable, grad_u: Callable, spec: EnergySpec, resolution: int = 256) -> float:
    """Penalised energy of a function by tensor-grid midpoint quadrature.

    ``u`` maps ``(n, d)`` points to ``(n,)`` values, ``grad_u`` to ``(n, d)``.
    A validation oracle; training never uses it.
    """
    X, w = interior_nodes(spec.domain, resolution)
    p = spec.p

    def integrand(Y):
        G = np.atleast_2d(grad_u(Y)).reshape(Y.shape[0], -1)
        return np.linalg.norm(G, axis=1) ** p / p - spec.source(Y) * u(Y)

    value = integrate(integrand, X, w)
    if spec.penalty > 0:
        S, ws = boundary_nodes(spec.domain, resolution)
        inner = integrate(lambda Y: np.abs(u(Y)) ** p, S, ws)
        value = value + spec.penalty * inner ** (2.0 / p)
    return value
