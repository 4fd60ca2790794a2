"""Invariant sweeps shared by the command line and the test-suite.

Each sweep returns plain rows (dicts) so callers can tabulate them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cases import sine_interpolant_knots
from .energy import EnergySpec, batch_seeds, estimate_interior, estimate_total, one_source
from .geometry import Hypercube, Interval, sample_interior
from .net import NetworkParams, activation_pattern, architecture, forward, init
from .pwl import (
    Breakpoints1D,
    affine_network,
    bump,
    bump_gradient,
    hat_breakpoints,
    kuhn_interpolant,
    pwl_to_network_1d,
    relu_max,
    relu_min,
    sobolev_error,
)

HAT_ENERGY = 1.5  # 1/2 int |u'|^2 - int u for the unit hat with f = 1


def pool_map(fn, items, jobs: int = 1) -> list:
    """``list(map(fn, items))``, on a thread pool when ``jobs > 1``; order is preserved."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# --- gradient check -------------------------------------------------------


@dataclass
class GradcheckResult:
    seed: int
    d: int
    depth: int
    width: int
    p: float
    n_params: int
    excluded: list
    max_rel_error: float
    worst_index: int
    rel_errors: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self._tol

    _tol: float = 1e-5


def relative_error(a, b, floor: float = 1e-4):
    """``|a - b| / max(|a|, |b|, floor)``; the floor keeps near-zero components from dominating."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradcheck_net(
    seed: int,
    d: int,
    depth: int,
    width: int,
    p: float = 2.0,
    lam: float = 10.0,
    N: int = 64,
    M: int = 16,
    h: float = 1e-4,
    tol: float = 1e-5,
    flip_sign: bool = False,
) -> GradcheckResult:
    """Compare the reverse-mode gradient of ``estimate_total`` with central differences.

    The net has He weights and small random biases; the energy uses
    ``f = 1`` on the unit cube.  Parameters whose perturbation by ``+-h``
    changes an activation pattern at a sample point are excluded.
    ``flip_sign`` negates the reverse-mode gradient (a negative control).
    """
    s_net, s_bias, s_batch = np.random.SeedSequence(seed).spawn(3)
    base = init(architecture(d, width, depth), s_net)
    theta = base.flat()
    rng = np.random.default_rng(s_bias)
    k = 0
    for A, b in base.layers:
        k += A.size
        theta[k:k + b.size] = 0.1 * rng.standard_normal(b.size)
        k += b.size
    params = base.with_flat(theta)
    domain = Interval(0.0, 1.0) if d == 1 else Hypercube(0.0, 1.0, d)
    spec = EnergySpec(domain, one_source, p, lam)
    grad = ad.grad_params(lambda net: estimate_total(net, spec, N, M, s_batch).total, params)
    if flip_sign:
        grad = -grad
    si, sb = batch_seeds(s_batch)
    X = np.concatenate(
        [sample_interior(domain, N, si).points, _boundary_points(domain, M, sb)]
    )
    pattern = activation_pattern(params, X)
    fd = np.zeros_like(theta)
    excluded = []
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = h
        plus, minus = params.with_flat(theta + step), params.with_flat(theta - step)
        if not (
            np.array_equal(activation_pattern(plus, X), pattern)
            and np.array_equal(activation_pattern(minus, X), pattern)
        ):
            excluded.append(j)
            continue
        fd[j] = (estimate_total(plus, spec, N, M, s_batch).total - estimate_total(minus, spec, N, M, s_batch).total) / (2 * h)
    rel = relative_error(grad, fd)
    rel[excluded] = 0.0
    worst = int(np.argmax(rel))
    result = GradcheckResult(seed, d, depth, width, p, theta.size, excluded, float(rel[worst]), worst, rel)
    result._tol = tol
    return result


def _boundary_points(domain, M, seed):
    from .geometry import sample_boundary

    return sample_boundary(domain, M, seed).points


def gradcheck_suite(n_nets: int = 20, seed: int = 0, dims=(1, 2, 3), depths=(2, 3), max_width: int = 32,
                    tol: float = 1e-5, flip_sign: bool = False, jobs: int = 1) -> list[GradcheckResult]:
    """Random nets cycling through ``dims`` x ``depths`` with widths up to ``max_width``.

    Odd-numbered nets use ``p = 3`` so the general-``p`` path is covered too.
    """
    children = np.random.SeedSequence(seed).spawn(n_nets)
    widths = [w for w in (4, 8, 16, 32, 64) if w <= max_width] or [max_width]
    jobs_spec = []
    for i, ss in enumerate(children):
        d = dims[i % len(dims)]
        depth = depths[(i // len(dims)) % len(depths)]
        width = widths[i % len(widths)]
        jobs_spec.append((_int_seed(ss), d, depth, width, 2.0 if i % 2 == 0 else 3.0))
    return pool_map(
        lambda a: gradcheck_net(a[0], a[1], a[2], a[3], p=a[4], tol=tol, flip_sign=flip_sign), jobs_spec, jobs
    )


# --- Monte-Carlo statistics -----------------------------------------------


def hat_network() -> NetworkParams:
    return pwl_to_network_1d(hat_breakpoints())


def mc_hat_sweep(ns=(1024, 4096, 16384), seeds: int = 50, seed: int = 0, jobs: int = 1) -> list[dict]:
    """Spread of the interior-energy estimate of the hat fixture over independent seeds."""
    net = hat_network()
    spec = EnergySpec(Interval(0.0, 1.0), one_source, 2.0, 0.0)
    children = np.random.SeedSequence(seed).spawn(len(ns))
    rows = []
    for n, ss in zip(ns, children):
        estimates = np.array(
            pool_map(lambda s: estimate_interior(net, spec, sample_interior(spec.domain, n, s)), ss.spawn(seeds), jobs)
        )
        sd = float(estimates.std(ddof=1))
        mean_se = sd / math.sqrt(seeds)
        rows.append({
            "case": "hat_energy",
            "n": int(n),
            "seeds": int(seeds),
            "mean": float(estimates.mean()),
            "std_error": sd,
            "mean_std_error": mean_se,
            "z": (float(estimates.mean()) - HAT_ENERGY) / mean_se if mean_se > 0 else 0.0,
            "exact": HAT_ENERGY,
        })
    return rows


# --- exact representation -------------------------------------------------


def _sine_breakpoints() -> Breakpoints1D:
    knots, values = sine_interpolant_knots()
    return Breakpoints1D(knots, values)


def _affines_2d():
    W = [(1.0, -0.5), (-0.75, 0.25), (0.3, 1.2)]
    c = [0.1, -0.2, 0.05]
    nets = [affine_network(w, b) for w, b in zip(W, c)]
    values = lambda X: np.stack([X @ np.array(w) + b for w, b in zip(W, c)], axis=1)
    return nets, values


def pwl_fixtures(names=None) -> list[tuple]:
    """``(name, network, oracle, declared_depth, box)`` for each fixture."""
    hat = hat_breakpoints()
    sine = _sine_breakpoints()
    nets, values = _affines_2d()
    table = [
        ("hat", pwl_to_network_1d(hat), lambda X: hat(X[:, 0]), 2, (-1.0, 2.0)),
        ("sine17", pwl_to_network_1d(sine), lambda X: sine(X[:, 0]), 2, (-1.0, 2.0)),
        ("max3", relu_max(nets), lambda X: values(X).max(axis=1), 1 + math.ceil(math.log2(3)), (-2.0, 2.0)),
        ("min3", relu_min(nets), lambda X: values(X).min(axis=1), 1 + math.ceil(math.log2(3)), (-2.0, 2.0)),
    ]
    if names is not None:
        table = [t for t in table if t[0] in names]
    return table


def pwl_check(names=None, points: int = 10_000, seed: int = 0) -> list[dict]:
    rows = []
    for (name, net, oracle, declared, (lo, hi)), ss in zip(
        pwl_fixtures(names), np.random.SeedSequence(seed).spawn(len(pwl_fixtures(names)))
    ):
        X = np.random.default_rng(ss).uniform(lo, hi, size=(points, net.input_dim))
        got, want = forward(net, X), oracle(X)
        dev = np.abs(got - want)
        scaled = float(np.max(dev / (1.0 + np.abs(want))))
        rows.append({
            "fixture": name,
            "dim": net.input_dim,
            "depth": net.depth,
            "declared_depth": declared,
            "points": points,
            "max_abs_dev": float(dev.max()),
            "max_scaled_dev": scaled,
            "ok": bool(scaled <= 1e-12 and net.depth == declared),
        })
    return rows


# --- interpolation sweep --------------------------------------------------


def support_violations(interp, delta: float, points: int = 4000, seed: int = 0) -> int:
    """Sampled points farther than ``delta * sqrt(d)`` from the unit ball where the interpolant is nonzero."""
    d = interp.dim
    X = np.random.default_rng(seed).uniform(interp.origin - delta, interp.upper + delta, size=(points, d))
    far = np.linalg.norm(X, axis=1) - 1.0 > delta * math.sqrt(d)
    return int(np.count_nonzero(interp(X[far]) != 0.0))


def interp_sweep(deltas=(0.4, 0.2, 0.1, 0.05), ps=(2.0,), dims=(1,), jobs: int = 1) -> list[dict]:
    """Sobolev errors of the bump's Kuhn interpolant along a sequence of grid widths."""
    combos = [(d, p, delta) for d in dims for p in ps for delta in deltas]

    def run(combo):
        d, p, delta = combo
        interp = kuhn_interpolant(bump, delta, (-np.ones(d), np.ones(d)))
        lp, w1p = sobolev_error(bump, bump_gradient, interp, p)
        return {"dim": d, "p": p, "delta": delta, "lp": lp, "w1p": w1p,
                "support_violations": support_violations(interp, delta)}

    rows = pool_map(run, combos, jobs)
    for prev, row in zip([None] + rows[:-1], rows):
        same = prev is not None and prev["dim"] == row["dim"] and prev["p"] == row["p"]
        row["ratio"] = row["w1p"] / prev["w1p"] if same else None
    return rows
