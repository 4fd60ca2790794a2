"""Domains with exact measures and uniform interior/boundary samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SampleBatch:
    """Sample points with the weight turning a sum into an integral estimate.

    ``weight * g(points).sum()`` estimates the integral of ``g``.
    """

    points: np.ndarray
    weight: float
    seed: int | None = None
    draws: int = 0

    def __len__(self):
        return self.points.shape[0]

    def integrate(self, values) -> float:
        return self.weight * float(np.sum(values))


@dataclass(frozen=True)
class Domain:
    """Base class; subclasses define ``dim``, ``volume`` and ``boundary_measure``."""

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Hypercube(Domain):
    """The cube ``(a, b)^dim``."""

    a: float = 0.0
    b: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need b > a")
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    @property
    def volume(self) -> float:
        return (self.b - self.a) ** self.dim

    @property
    def boundary_measure(self) -> float:
        # two endpoints under counting measure when dim == 1
        if self.dim == 1:
            return 2.0
        return 2 * self.dim * (self.b - self.a) ** (self.dim - 1)

    def contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=np.float64)
        return np.all((X >= self.a - tol) & (X <= self.b + tol), axis=-1)

    def on_boundary(self, X, tol=1e-12):
        X = np.asarray(X, dtype=np.float64)
        near = np.isclose(X, self.a, rtol=0, atol=tol) | np.isclose(X, self.b, rtol=0, atol=tol)
        return self.contains(X, tol) & np.any(near, axis=-1)

    def bounding_box(self):
        return np.full(self.dim, float(self.a)), np.full(self.dim, float(self.b))

    def to_dict(self):
        return {"kind": "hypercube", "a": self.a, "b": self.b, "dim": self.dim}


@dataclass(frozen=True)
class Interval(Hypercube):
    """The interval ``(a, b)``; a one-dimensional hypercube."""

    dim: int = field(default=1, init=False)

    def to_dict(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Ball(Domain):
    """Open ball of ``radius`` around ``center`` in ``R^dim``."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.broadcast_to(self.center, (self.dim,))))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) * self.radius ** d / math.gamma(d / 2 + 1)

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        return self.dim * self.volume / self.radius

    def contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=np.float64)
        return np.linalg.norm(X - np.array(self.center), axis=-1) <= self.radius + tol

    def on_boundary(self, X, tol=1e-12):
        r = np.linalg.norm(np.asarray(X, dtype=np.float64) - np.array(self.center), axis=-1)
        return np.abs(r - self.radius) <= tol

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius, "dim": self.dim}


def domain_from_dict(doc: dict) -> Domain:
    """Build a domain from its config table, e.g. ``{kind = "hypercube", a = 0, b = 1, dim = 2}``."""
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind == "interval":
        return Interval(**doc)
    if kind == "hypercube":
        return Hypercube(**doc)
    if kind == "ball":
        if "center" in doc:
            doc["center"] = tuple(doc["center"])
        return Ball(**doc)
    raise ValueError(f"unknown domain kind {kind!r}")


def _uniform_directions(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_interior(domain: Domain, N: int, seed) -> SampleBatch:
    """``N`` i.i.d. uniform points in the domain with weight ``|domain| / N``."""
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(domain, Hypercube):
        X = domain.a + (domain.b - domain.a) * rng.random((N, domain.dim))
    elif isinstance(domain, Ball):
        # radius by inversion of the CDF r^d
        r = domain.radius * rng.random(N) ** (1.0 / domain.dim)
        X = np.array(domain.center) + r[:, None] * _uniform_directions(rng, N, domain.dim)
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    return SampleBatch(X, domain.volume / N, seed, N)


def sample_boundary(domain: Domain, M: int, seed) -> SampleBatch:
    """``M`` uniform points on the boundary with weight ``|boundary| / M``.

    In one dimension the boundary is the two endpoints, each with weight 1,
    whatever ``M`` is.
    """
    if M < 1:
        raise ValueError("M must be positive")
    if domain.dim == 1:
        lo, hi = domain.bounding_box()
        return SampleBatch(np.array([[lo[0]], [hi[0]]]), 1.0, seed, 2)
    rng = np.random.default_rng(seed)
    if isinstance(domain, Hypercube):
        d = domain.dim
        X = domain.a + (domain.b - domain.a) * rng.random((M, d))
        # all faces have equal area
        face = rng.integers(0, 2 * d, size=M)
        axis, side = face // 2, face % 2
        X[np.arange(M), axis] = np.where(side == 0, domain.a, domain.b)
    elif isinstance(domain, Ball):
        X = np.array(domain.center) + domain.radius * _uniform_directions(rng, M, domain.dim)
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    return SampleBatch(X, domain.boundary_measure / M, seed, M)
