"""Manufactured solutions with known exact solutions and minimal energies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Ball, Domain, Hypercube, Interval, sample_boundary, sample_interior


@dataclass(frozen=True)
class ManufacturedCase:
    """Problem ``-div(|grad u|^(p-2) grad u) = f`` in the domain, ``u = 0`` on its boundary.

    ``u_star`` and ``grad_u_star`` map ``(n, d)`` arrays to ``(n,)`` and
    ``(n, d)``.  ``F_min`` is the minimal energy when known.  Cases with
    ``solves_pde=False`` are fixtures only (no residual check).
    """

    name: str
    domain: Domain
    p: float
    f: Callable
    u_star: Callable
    grad_u_star: Callable
    F_min: float | None = None
    solves_pde: bool = True
    description: str = ""

    @property
    def dim(self) -> int:
        return self.domain.dim


def _x(X):
    return np.asarray(X, dtype=np.float64).reshape(X.shape[0], -1)


def poisson_1d_sine() -> ManufacturedCase:
    pi = math.pi
    return ManufacturedCase(
        name="poisson_1d_sine",
        domain=Interval(0.0, 1.0),
        p=2.0,
        f=lambda X: pi ** 2 * np.sin(pi * _x(X)[:, 0]),
        u_star=lambda X: np.sin(pi * _x(X)[:, 0]),
        grad_u_star=lambda X: pi * np.cos(pi * _x(X)[:, :1]),
        F_min=-pi ** 2 / 4,
        description="-u'' = pi^2 sin(pi x) on (0, 1)",
    )


def sine_interpolant_knots(n: int = 17) -> tuple[np.ndarray, np.ndarray]:
    knots = np.linspace(0.0, 1.0, n)
    values = np.sin(math.pi * knots)
    values[[0, -1]] = 0.0
    return knots, values


def _pwl_energy(knots, values) -> float:
    # 0.5 int u'^2 - int f u with f = pi^2 sin(pi x); Gauss-Legendre per piece is exact
    # for the linear factor and converges fast for the smooth one
    pi = math.pi
    t, w = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for x0, x1, v0, v1 in zip(knots[:-1], knots[1:], values[:-1], values[1:]):
        h = x1 - x0
        x = x0 + 0.5 * h * (t + 1)
        u = v0 + (v1 - v0) * (x - x0) / h
        total += 0.5 * (v1 - v0) ** 2 / h - 0.5 * h * float(np.dot(w, pi ** 2 * np.sin(pi * x) * u))
    return total


def poisson_1d_pwl() -> ManufacturedCase:
    """CPWL interpolant of ``sin(pi x)`` on 17 uniform knots, exactly representable by a network.

    Not a PDE solution.  ``F_min`` is its energy for ``f = pi^2 sin(pi x)``,
    which is the minimum over CPWL functions with these knots because 1-D
    linear finite elements are nodally exact.
    """
    pi = math.pi
    knots, values = sine_interpolant_knots()
    slopes = np.diff(values) / np.diff(knots)

    def u(X):
        return np.interp(_x(X)[:, 0], knots, values)

    def grad(X):
        x = _x(X)[:, 0]
        i = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[i][:, None]

    return ManufacturedCase(
        name="poisson_1d_pwl",
        domain=Interval(0.0, 1.0),
        p=2.0,
        f=lambda X: pi ** 2 * np.sin(pi * _x(X)[:, 0]),
        u_star=u,
        grad_u_star=grad,
        F_min=_pwl_energy(knots, values),
        solves_pde=False,
        description="CPWL interpolant of sin(pi x), 17 knots",
    )


def poisson_cube(d: int = 2) -> ManufacturedCase:
    pi = math.pi

    def u(X):
        return np.prod(np.sin(pi * _x(X)), axis=1)

    def grad(X):
        X = _x(X)
        S, C = np.sin(pi * X), np.cos(pi * X)
        G = np.empty_like(X)
        for k in range(X.shape[1]):
            G[:, k] = pi * C[:, k] * np.prod(np.delete(S, k, axis=1), axis=1)
        return G

    return ManufacturedCase(
        name="poisson_cube_d",
        domain=Hypercube(0.0, 1.0, d),
        p=2.0,
        f=lambda X: d * pi ** 2 * u(X),
        u_star=u,
        grad_u_star=grad,
        # -1/2 f(u*) = -(d pi^2 / 2) 2^-d
        F_min=-d * pi ** 2 / 2 ** (d + 1),
        description=f"-Laplace u = {d} pi^2 prod sin(pi x_k) on (0, 1)^{d}",
    )


def poisson_ball(d: int = 2, radius: float = 1.0) -> ManufacturedCase:
    domain = Ball(tuple([0.0] * d), radius, d)
    vol = domain.volume
    return ManufacturedCase(
        name="poisson_ball",
        domain=domain,
        p=2.0,
        f=lambda X: np.ones(X.shape[0]),
        u_star=lambda X: (radius ** 2 - np.sum(_x(X) ** 2, axis=1)) / (2 * d),
        grad_u_star=lambda X: -_x(X) / d,
        # -1/2 int u* = -1/2 * vol * r^2 / (d (d + 2))
        F_min=-0.5 * vol * radius ** 2 / (d * (d + 2)),
        description=f"-Laplace u = 1 on the ball of radius {radius} in R^{d}",
    )


def plaplace_1d(p: float = 4.0) -> ManufacturedCase:
    q = p / (p - 1)

    def u(X):
        return (p - 1) / p * (1.0 - np.abs(_x(X)[:, 0]) ** q)

    def grad(X):
        x = _x(X)[:, :1]
        return -np.sign(x) * np.abs(x) ** (1.0 / (p - 1))

    # int_{-1}^{1} u* dx = 2 (p-1)/p (1 - 1/(q+1)); weak form gives F_min = (1/p - 1) f(u*)
    fu = 2 * (p - 1) / p * (1 - 1 / (q + 1))
    return ManufacturedCase(
        name="plaplace_1d",
        domain=Interval(-1.0, 1.0),
        p=float(p),
        f=lambda X: np.ones(X.shape[0]),
        u_star=u,
        grad_u_star=grad,
        F_min=(1.0 / p - 1.0) * fu,
        description=f"-(|u'|^{p - 2:g} u')' = 1 on (-1, 1)",
    )


def manufactured_registry() -> list[ManufacturedCase]:
    return [poisson_1d_sine(), poisson_1d_pwl(), poisson_cube(2), poisson_ball(2), plaplace_1d(4.0)]


def get_case(name: str) -> ManufacturedCase:
    cases = {c.name: c for c in manufactured_registry()}
    if name not in cases:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(cases)}")
    return cases[name]


def flux_residual(case: ManufacturedCase, X, h: float = 1e-5) -> np.ndarray:
    """Strong-form residual ``-div(|grad u|^(p-2) grad u) - f`` by central differences of the flux."""
    X = _x(X)
    p = case.p

    def flux(Y):
        G = case.grad_u_star(Y)
        r = np.linalg.norm(G, axis=1, keepdims=True)
        return G if p == 2 else r ** (p - 2) * G

    div = np.zeros(X.shape[0])
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = h
        div += (flux(X + e)[:, k] - flux(X - e)[:, k]) / (2 * h)
    return -div - case.f(X)


def gradient_mismatch(case: ManufacturedCase, X, h: float = 1e-6) -> np.ndarray:
    """Max deviation of ``grad_u_star`` from central differences of ``u_star``, per point."""
    X = _x(X)
    G = case.grad_u_star(X)
    fd = np.empty_like(G)
    for k in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[k] = h
        fd[:, k] = (case.u_star(X + e) - case.u_star(X - e)) / (2 * h)
    return np.max(np.abs(fd - G), axis=1)


def check_case(case: ManufacturedCase, n: int = 1000, seed=0, tol: float = 1e-6, boundary_tol: float = 1e-10) -> dict:
    """Residual and boundary checks of a manufactured solution on random points."""
    ss_in, ss_bd = np.random.SeedSequence(seed).spawn(2)
    X = sample_interior(case.domain, n, ss_in).points
    S = sample_boundary(case.domain, n, ss_bd).points
    report = {
        "boundary_max": float(np.max(np.abs(case.u_star(S)))),
        "residual_max": float(np.max(np.abs(flux_residual(case, X)))) if case.solves_pde else None,
    }
    report["ok"] = report["boundary_max"] <= boundary_tol and (
        report["residual_max"] is None or report["residual_max"] <= tol
    )
    return report
