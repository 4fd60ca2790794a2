"""ReLU networks as parameter tuples, their realisations and input gradients.

A network is stored as an ordered tuple of ``(A_l, b_l)`` pairs with
``A_l`` of shape ``(N_l, N_{l-1})``.  Hidden layers are followed by ReLU;
the last layer is affine.  Evaluation is vectorised over a batch of points
of shape ``(n, d)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when layer shapes or input dimensions do not compose."""


class ArchitectureError(ValueError):
    """Raised for invalid architecture specifications."""


def relu(z):
    return np.maximum(z, 0.0)


def relu_mask(z):
    # subgradient at the kink is 0
    return (z > 0).astype(np.float64)


@dataclass(frozen=True)
class NetworkParams:
    """Parameter tuple ``((A_1, b_1), ..., (A_L, b_L))`` of a scalar ReLU network."""

    layers: tuple

    def __post_init__(self):
        layers = []
        for A, b in self.layers:
            A = np.array(A, dtype=np.float64)
            b = np.array(b, dtype=np.float64).reshape(-1)
            if A.ndim != 2 or A.shape[0] != b.shape[0]:
                raise ShapeError(f"layer has weight shape {A.shape} and bias shape {b.shape}")
            A.setflags(write=False)
            b.setflags(write=False)
            layers.append((A, b))
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for l in range(1, len(layers)):
            if layers[l][0].shape[1] != layers[l - 1][0].shape[0]:
                raise ShapeError(
                    f"layer {l + 1} expects {layers[l][0].shape[1]} inputs, "
                    f"layer {l} produces {layers[l - 1][0].shape[0]}"
                )
        if layers[-1][0].shape[0] != 1:
            raise ShapeError("output layer must have a single unit")
        if any(0 in A.shape for A, _ in layers):
            raise ArchitectureError("zero-size layer")
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [A.shape[0] for A, _ in self.layers]

    @property
    def width(self) -> int:
        return max(self.dims)

    @property
    def n_params(self) -> int:
        return sum(A.size + b.size for A, b in self.layers)

    def flat(self) -> np.ndarray:
        """Parameters as one vector: ``A_1`` row-major, ``b_1``, ``A_2``, ..."""
        return np.concatenate([np.concatenate([A.ravel(), b]) for A, b in self.layers])

    def with_flat(self, theta) -> "NetworkParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        layers, k = [], 0
        for A, b in self.layers:
            An = theta[k:k + A.size].reshape(A.shape)
            k += A.size
            bn = theta[k:k + b.size]
            k += b.size
            layers.append((An, bn))
        return NetworkParams(tuple(layers))

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "dims": self.dims,
            "weights": [A.ravel().tolist() for A, _ in self.layers],
            "biases": [b.tolist() for _, b in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkParams":
        dims = doc["dims"]
        if len(dims) != doc["depth"] + 1:
            raise ShapeError("dims length does not match depth")
        layers = []
        for l, (w, b) in enumerate(zip(doc["weights"], doc["biases"])):
            A = np.array(w, dtype=np.float64).reshape(dims[l + 1], dims[l])
            layers.append((A, np.array(b, dtype=np.float64)))
        return cls(tuple(layers))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NetworkParams":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, NetworkParams) or self.dims != other.dims:
            return NotImplemented if not isinstance(other, NetworkParams) else False
        return all(
            np.array_equal(A, B) and np.array_equal(a, b)
            for (A, a), (B, b) in zip(self.layers, other.layers)
        )

    __hash__ = None


def _as_batch(params: NetworkParams, x):
    x = np.asarray(x, dtype=np.float64)
    d = params.input_dim
    if x.ndim == 0:
        X, single = x.reshape(1, 1), True
    elif x.ndim == 1 and x.shape[0] == d:
        X, single = x[None, :], True
    elif x.ndim == 1 and d == 1:
        # a flat array for a d=1 net is a batch of scalars
        X, single = x[:, None], False
    else:
        X, single = x, False
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"input has shape {x.shape}, network expects dimension {params.input_dim}")
    return X, single


def forward(params: NetworkParams, x):
    """Evaluate ``u_theta``.

    ``x`` is a point of length ``d`` (returns a float) or a batch of shape
    ``(n, d)`` (returns shape ``(n,)``).  For ``d == 1`` a flat array is read
    as a batch of scalars.
    """
    X, single = _as_batch(params, x)
    h = X
    for A, b in params.layers[:-1]:
        h = relu(h @ A.T + b)
    A, b = params.layers[-1]
    out = (h @ A.T + b)[:, 0]
    return float(out[0]) if single else out


def input_gradient(params: NetworkParams, x):
    """Exact gradient of ``u_theta`` with respect to its input.

    Computed as ``A_L D_{L-1} A_{L-1} ... D_1 A_1`` with ``D_l`` the 0/1
    activation masks; exact wherever no pre-activation is zero.
    Returns shape ``(d,)`` for a point, ``(n, d)`` for a batch.
    """
    X, single = _as_batch(params, x)
    h = X
    # J holds d(h)/dx for every sample, shape (n, N_l, d)
    J = np.broadcast_to(np.eye(params.input_dim), (X.shape[0],) + (params.input_dim,) * 2)
    for A, b in params.layers[:-1]:
        z = h @ A.T + b
        m = relu_mask(z)
        J = m[:, :, None] * np.einsum("jk,nkd->njd", A, J)
        h = relu(z)
    A, _ = params.layers[-1]
    G = np.einsum("jk,nkd->njd", A, J)[:, 0, :]
    return G[0] if single else G


def activation_pattern(params: NetworkParams, X) -> np.ndarray:
    """Boolean activation pattern of every hidden unit on a batch, concatenated over layers."""
    X, _ = _as_batch(params, X)
    h, masks = X, []
    for A, b in params.layers[:-1]:
        z = h @ A.T + b
        masks.append(z > 0)
        h = relu(z)
    if not masks:
        return np.zeros((X.shape[0], 0), dtype=bool)
    return np.concatenate(masks, axis=1)


def default_depth(d: int) -> int:
    """Depth ``ceil(log2(d + 1)) + 1`` sufficient to represent every CPWL function on R^d."""
    if d < 1:
        raise ValueError("input dimension must be positive")
    return math.ceil(math.log2(d + 1)) + 1


def architecture(d: int, width: int, depth: int | None = None) -> list[int]:
    """Rectangular architecture ``[d, width, ..., width, 1]``."""
    depth = default_depth(d) if depth is None else depth
    if depth < 1:
        raise ArchitectureError("depth must be at least 1")
    return [d] + [width] * (depth - 1) + [1]


def init(arch: Sequence[int], seed: int) -> NetworkParams:
    """He-scaled Gaussian weights, zero biases, reproducible from ``seed``."""
    arch = list(arch)
    if len(arch) < 2 or arch[-1] != 1:
        raise ArchitectureError(f"architecture must start with d and end with 1, got {arch}")
    if any(int(n) < 1 for n in arch):
        raise ArchitectureError(f"zero-size layer in {arch}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        A = rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in)
        layers.append((A, np.zeros(fan_out)))
    return NetworkParams(tuple(layers))


def zeros(arch: Sequence[int]) -> NetworkParams:
    arch = list(arch)
    return NetworkParams(tuple((np.zeros((o, i)), np.zeros(o)) for i, o in zip(arch[:-1], arch[1:])))


def widen(params: NetworkParams, width: int, seed: int, anchors=None) -> NetworkParams:
    """Grow every hidden layer to ``width`` units without changing the realisation.

    New units get fresh He-scaled incoming weights; every weight reading a
    new unit is zero, so the new units contribute nothing until training
    moves those outgoing weights.  Biases of new units are zero, or, when
    ``anchors`` (points in input space) are given, chosen so that the kink
    of each new unit passes through one anchor, drawn in turn.  Anchored
    units start active on part of the region the anchors come from.
    """
    dims = params.dims
    hidden = dims[1:-1]
    if any(width < n for n in hidden):
        raise ArchitectureError(f"cannot shrink hidden layers {hidden} to width {width}")
    rng = np.random.default_rng(seed)
    H = None if anchors is None else _as_batch(params, anchors)[0]
    new_dims = [dims[0]] + [width] * len(hidden) + [1]
    layers = []
    for l, (A, b) in enumerate(params.layers):
        rows, cols = new_dims[l + 1], new_dims[l]
        An = np.zeros((rows, cols))
        bn = np.zeros(rows)
        An[: A.shape[0], : A.shape[1]] = A
        bn[: b.shape[0]] = b
        extra = rows - A.shape[0]
        if extra:
            An[A.shape[0]:, : A.shape[1]] = rng.standard_normal((extra, A.shape[1])) * math.sqrt(2.0 / A.shape[1])
            if H is not None:
                at = H[np.arange(extra) % H.shape[0]]
                bn[A.shape[0]:] = -np.einsum("ij,ij->i", An[A.shape[0]:], at)
        layers.append((An, bn))
        if H is not None and l < len(params.layers) - 1:
            H = relu(H @ An.T + bn)
    return NetworkParams(tuple(layers))
