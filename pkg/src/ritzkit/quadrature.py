"""Composite midpoint rules on tensor grids for validation integrals (d <= 3)."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Ball, Domain, Hypercube

MIN_RESOLUTION = 64
CHUNK = 1 << 16


def _check(domain: Domain, resolution: int):
    if domain.dim > 3:
        raise ValueError("tensor-grid quadrature is limited to d <= 3")
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution {resolution} below the minimum of {MIN_RESOLUTION} per axis")


def midpoints(lo, hi, resolution: int) -> tuple[np.ndarray, float]:
    """Cell midpoints of a ``resolution^d`` grid on the box ``[lo, hi]`` and the cell volume."""
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    h = (hi - lo) / resolution
    axes = [lo[k] + h[k] * (np.arange(resolution) + 0.5) for k in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), float(np.prod(h))


def interior_nodes(domain: Domain, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrals over the domain.

    Balls use the midpoints of their bounding box that fall inside, so the
    rule is only first-order accurate there.
    """
    _check(domain, resolution)
    lo, hi = domain.bounding_box()
    X, vol = midpoints(lo, hi, resolution)
    if isinstance(domain, Ball):
        X = X[domain.contains(X)]
    return X, np.full(X.shape[0], vol)


def boundary_nodes(domain: Domain, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrals over the boundary (counting measure for d = 1)."""
    _check(domain, resolution)
    d = domain.dim
    lo, hi = domain.bounding_box()
    if d == 1:
        return np.array([[lo[0]], [hi[0]]]), np.ones(2)
    if isinstance(domain, Hypercube):
        face, area = midpoints(lo[: d - 1], hi[: d - 1], resolution)
        pts = []
        for axis in range(d):
            for value in (domain.a, domain.b):
                P = np.insert(face, axis, value, axis=1)
                pts.append(P)
        X = np.concatenate(pts)
        return X, np.full(X.shape[0], area)
    if isinstance(domain, Ball):
        c, r = np.array(domain.center), domain.radius
        if d == 2:
            t = 2 * math.pi * (np.arange(resolution) + 0.5) / resolution
            X = c + r * np.stack([np.cos(t), np.sin(t)], axis=1)
            return X, np.full(resolution, 2 * math.pi * r / resolution)
        th = math.pi * (np.arange(resolution) + 0.5) / resolution
        ph = 2 * math.pi * (np.arange(2 * resolution) + 0.5) / (2 * resolution)
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        TH, PH = TH.ravel(), PH.ravel()
        X = c + r * np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=1)
        w = r * r * np.sin(TH) * (math.pi / resolution) * (math.pi / resolution)
        return X, w
    raise TypeError(f"unsupported domain {domain!r}")


def integrate(fn, X, w) -> float:
    """``sum(w * fn(X))`` evaluated in chunks to bound memory."""
    acc = 0.0
    for start in range(0, X.shape[0], CHUNK):
        sl = slice(start, start + CHUNK)
        acc += float(np.dot(w[sl], fn(X[sl])))
    return acc
