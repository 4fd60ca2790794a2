"""Exact CPWL <-> ReLU constructions and piecewise-linear interpolation on Kuhn triangulations.

Two directions are covered:

* compiling piecewise-linear functions into ReLU networks that realise
  them exactly (1-D breakpoint lists, and pointwise max/min of networks);
* approximating a smooth compactly supported function by its vertex
  interpolant on a uniform Kuhn (Freudenthal) triangulation, with
  ``L^p`` and ``W^{1,p}`` error measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .net import NetworkParams, ShapeError
from .quadrature import midpoints


class InvalidBreakpoints(ValueError):
    pass


@dataclass(frozen=True)
class Breakpoints1D:
    """Continuous piecewise-linear function on R through ``(knots[i], values[i])``.

    Outside ``[knots[0], knots[-1]]`` the function continues with
    ``left_slope`` / ``right_slope``.
    """

    knots: np.ndarray
    values: np.ndarray
    left_slope: float = 0.0
    right_slope: float = 0.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if knots.size == 0 or knots.shape != values.shape:
            raise InvalidBreakpoints("need matching, nonempty knots and values")
        if np.any(np.diff(knots) <= 0):
            raise InvalidBreakpoints("knots must be strictly increasing (no duplicates)")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_slope", float(self.left_slope))
        object.__setattr__(self, "right_slope", float(self.right_slope))

    @classmethod
    def affine(cls, slope: float, intercept: float) -> "Breakpoints1D":
        return cls(np.array([0.0]), np.array([intercept]), slope, slope)

    @property
    def slopes(self) -> np.ndarray:
        """Slopes of all pieces, left ray first and right ray last."""
        inner = np.diff(self.values) / np.diff(self.knots)
        return np.concatenate([[self.left_slope], inner, [self.right_slope]])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        k, v = self.knots, self.values
        out = np.interp(x, k, v)
        out = np.where(x < k[0], v[0] + self.left_slope * (x - k[0]), out)
        return np.where(x > k[-1], v[-1] + self.right_slope * (x - k[-1]), out)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.slopes[np.searchsorted(self.knots, x, side="right")]


def hat_breakpoints(center: float = 0.5, half_width: float = 0.5) -> Breakpoints1D:
    """Hat function with peak 1 at ``center``, zero outside ``center +- half_width``."""
    c, h = float(center), float(half_width)
    return Breakpoints1D(np.array([c - h, c, c + h]), np.array([0.0, 1.0, 0.0]))


def pwl_to_network_1d(bp: Breakpoints1D) -> NetworkParams:
    """Depth-2 ReLU network realising ``bp`` exactly.

    ``u(x) = v_0 + s_left (x - x_0) + sum_i g_i relu(x - x_i)`` with ``g_i``
    the slope jump at knot ``x_i``.  The linear term uses
    ``x = relu(x) - relu(-x)``.  Hidden width is ``len(knots) + 2``.
    """
    k = bp.knots.size
    jumps = np.diff(bp.slopes)
    A1 = np.concatenate([np.ones(k), [1.0, -1.0]])[:, None]
    b1 = np.concatenate([-bp.knots, [0.0, 0.0]])
    A2 = np.concatenate([jumps, [bp.left_slope, -bp.left_slope]])[None, :]
    b2 = np.array([bp.values[0] - bp.left_slope * bp.knots[0]])
    return NetworkParams(((A1, b1), (A2, b2)))


def affine_network(weights, bias: float) -> NetworkParams:
    """Depth-1 network ``x -> weights . x + bias``."""
    w = np.asarray(weights, dtype=np.float64).reshape(1, -1)
    return NetworkParams(((w, np.array([float(bias)])),))


def _pad_one(layers: list) -> list:
    # append an identity layer through relu(z) - relu(-z)
    A, b = layers[-1]
    return layers[:-1] + [(np.vstack([A, -A]), np.concatenate([b, -b])), (np.array([[1.0, -1.0]]), np.zeros(1))]


def _pad_to(net: NetworkParams, depth: int) -> list:
    layers = list(net.layers)
    while len(layers) < depth:
        layers = _pad_one(layers)
    return layers


def _block_diag(A, B):
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[: A.shape[0], : A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


# rows give a+b, -(a+b), a-b, b-a; then max = (h0 - h1)/2 + (h2 + h3)/2
_MAX_GADGET = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
_MAX_READOUT = np.array([[0.5, -0.5, 0.5, 0.5]])


def _max_pair(la: list, lb: list) -> list:
    """Layers of ``max(a, b)`` for two layer lists of equal depth ``L``; result has depth ``L + 1``."""
    L = len(la)
    par = []
    for l in range(L):
        (A, a), (B, b) = la[l], lb[l]
        if l == 0:
            par.append((np.vstack([A, B]), np.concatenate([a, b])))
        else:
            par.append((_block_diag(A, B), np.concatenate([a, b])))
    A, b = par[-1]
    par[-1] = (_MAX_GADGET @ A, _MAX_GADGET @ b)
    par.append((_MAX_READOUT.copy(), np.zeros(1)))
    return par


def max_depth(depths: Sequence[int]) -> int:
    """Depth of :func:`relu_max` over networks of the given depths."""
    return max(depths) + math.ceil(math.log2(len(depths)))


def relu_max(nets: Sequence[NetworkParams]) -> NetworkParams:
    """Network realising the pointwise maximum of ``nets`` exactly.

    Inputs are first padded to a common depth with identity layers, then
    combined pairwise in a balanced tree of max gadgets, so the result has
    depth ``max(depths) + ceil(log2(k))``.
    """
    nets = list(nets)
    if not nets:
        raise ValueError("need at least one network")
    d = nets[0].input_dim
    if any(n.input_dim != d for n in nets):
        raise ShapeError("all networks must share the input dimension")
    if len(nets) == 1:
        return nets[0]
    depth = max(n.depth for n in nets)
    level = [_pad_to(n, depth) for n in nets]
    while len(level) > 1:
        nxt = [_max_pair(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(_pad_one(level[-1]))
        level = nxt
    return NetworkParams(tuple(level[0]))


def negate(net: NetworkParams) -> NetworkParams:
    A, b = net.layers[-1]
    return NetworkParams(net.layers[:-1] + ((-A, -b),))


def relu_min(nets: Sequence[NetworkParams]) -> NetworkParams:
    """Pointwise minimum, as ``-max(-nets)``."""
    nets = list(nets)
    if len(nets) == 1:
        return nets[0]
    return negate(relu_max([negate(n) for n in nets]))


def bump(X) -> np.ndarray:
    """Standard mollifier ``exp(-1 / (1 - |x|^2))`` on the open unit ball, zero outside."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    r2 = np.sum(X * X, axis=1)
    out = np.zeros(X.shape[0])
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump_gradient(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    r2 = np.sum(X * X, axis=1)
    G = np.zeros_like(X)
    inside = r2 < 1
    s = 1.0 - r2[inside]
    G[inside] = (np.exp(-1.0 / s) * (-2.0 / (s * s)))[:, None] * X[inside]
    return G


@dataclass(frozen=True)
class CpwlInterpolant:
    """Vertex interpolant on a uniform Kuhn triangulation of a box.

    Vertices sit at ``origin + delta * k`` for ``0 <= k <= cells``.  Each
    grid cell splits into ``d!`` simplices, one per ordering of the local
    coordinates.  The interpolant is zero outside the box.
    """

    origin: np.ndarray
    delta: float
    cells: tuple
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.origin.size

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.delta * np.array(self.cells)

    def vertices(self) -> np.ndarray:
        axes = [self.origin[k] + self.delta * np.arange(n + 1) for k, n in enumerate(self.cells)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def _locate(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        t = (X - self.origin) / self.delta
        cells = np.array(self.cells)
        inside = np.all((t >= 0) & (t <= cells), axis=1)
        idx = np.clip(np.floor(t), 0, cells - 1).astype(np.int64)
        frac = np.clip(t - idx, 0.0, 1.0)
        # simplex of the Kuhn triangulation: coordinates sorted in decreasing order
        order = np.argsort(-frac, axis=1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=1)
        n, d = X.shape
        corner = idx.copy()
        vals = [self.values[tuple(corner.T)]]
        for k in range(d):
            corner[np.arange(n), order[:, k]] += 1
            vals.append(self.values[tuple(corner.T)])
        return inside, order, fs, np.stack(vals, axis=1)

    def __call__(self, X) -> np.ndarray:
        inside, order, fs, vals = self._locate(X)
        d = self.dim
        lam = np.empty_like(vals)
        lam[:, 0] = 1.0 - fs[:, 0]
        lam[:, 1:d] = fs[:, : d - 1] - fs[:, 1:]
        lam[:, d] = fs[:, d - 1]
        return np.where(inside, np.sum(lam * vals, axis=1), 0.0)

    def gradient(self, X) -> np.ndarray:
        inside, order, fs, vals = self._locate(X)
        n, d = order.shape
        G = np.zeros((n, d))
        steps = np.diff(vals, axis=1) / self.delta
        G[np.arange(n)[:, None], order] = steps
        return np.where(inside[:, None], G, 0.0)


def kuhn_interpolant(phi: Callable, delta: float, support) -> CpwlInterpolant:
    """Interpolate ``phi`` at the vertices of a Kuhn grid of width ``delta``.

    ``support`` is a box ``(lo, hi)`` containing the support of ``phi``; the
    grid covers it inflated by one cell on every side, so the interpolant
    vanishes on the grid boundary.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    lo = np.atleast_1d(np.asarray(support[0], dtype=np.float64))
    hi = np.atleast_1d(np.asarray(support[1], dtype=np.float64))
    origin = lo - delta
    cells = tuple(int(c) + 2 for c in np.ceil((hi - lo) / delta - 1e-9))
    interp = CpwlInterpolant(origin, float(delta), cells, np.zeros(tuple(c + 1 for c in cells)))
    V = interp.vertices()
    values = np.asarray(phi(V), dtype=np.float64).reshape(interp.values.shape)
    return CpwlInterpolant(origin, float(delta), cells, values)


def interpolant_breakpoints(interp: CpwlInterpolant) -> Breakpoints1D:
    """Breakpoint form of a one-dimensional interpolant."""
    if interp.dim != 1:
        raise ShapeError("only one-dimensional interpolants have a breakpoint form")
    return Breakpoints1D(interp.vertices()[:, 0], interp.values.copy())


def default_resolution(interp: CpwlInterpolant, per_cell: int = 8) -> int:
    return max(64, per_cell * max(interp.cells))


def sobolev_error(phi, grad_phi, interp: CpwlInterpolant, p: float = 2.0, resolution: int | None = None):
    """``(||s - phi||_{L^p}, ||s - phi||_{W^{1,p}})`` over the interpolant's box.

    Midpoint rule on a ``resolution^d`` grid covering the box; outside it
    both ``s`` and ``phi`` vanish.  ``p = inf`` takes the maximum over nodes.
    """
    if interp.dim > 3:
        raise ValueError("quadrature is limited to d <= 3")
    if resolution is None:
        resolution = default_resolution(interp)
    spacing = interp.delta * max(interp.cells) / resolution
    if spacing > interp.delta / 4 + 1e-15:
        raise ValueError(f"resolution {resolution} gives spacing {spacing:.3g}, coarser than delta/4")
    if p < 1:
        raise ValueError("p must be at least 1")
    X, vol = midpoints(interp.origin, interp.upper, resolution)
    e0 = np.abs(interp(X) - phi(X))
    e1 = np.linalg.norm(interp.gradient(X) - np.atleast_2d(grad_phi(X)).reshape(X.shape), axis=1)
    if math.isinf(p):
        lp = float(e0.max())
        return lp, max(lp, float(e1.max()))
    a = vol * float(np.sum(e0 ** p))
    b = vol * float(np.sum(e1 ** p))
    return a ** (1.0 / p), (a + b) ** (1.0 / p)
