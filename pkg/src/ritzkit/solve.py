"""Training of ReLU networks on penalised energies and the growing-ladder experiment.

A ladder is a sequence of rungs ``n = 1, 2, ...`` with growing width,
growing boundary penalty and shrinking optimisation tolerance.  Each rung
warm-starts from the previous one, is trained to a plateau, and is scored
against the exact solution of a manufactured case.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .cases import ManufacturedCase
from .energy import EnergySpec, estimate_on_batches, estimate_total
from .geometry import sample_boundary, sample_interior
from .net import NetworkParams, architecture, forward, init, input_gradient, widen
from .quadrature import boundary_nodes, integrate, interior_nodes

log = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    """The loss or its gradient became non-finite during training."""

    def __init__(self, step: int, param_norm: float, detail: str = ""):
        self.step = step
        self.param_norm = param_norm
        super().__init__(f"non-finite loss at step {step} (parameter norm {param_norm:.6g}) {detail}".rstrip())


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # cosine decay of the step size to lr * final_lr_ratio over the step budget
    final_lr_ratio: float = 1.0

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.name!r}")
        if not 0 < self.final_lr_ratio <= 1:
            raise ValueError("final_lr_ratio must lie in (0, 1]")

    def lr_at(self, step: int, total: int) -> float:
        if self.final_lr_ratio == 1 or total <= 1:
            return self.lr
        c = 0.5 * (1 + math.cos(math.pi * step / (total - 1)))
        return self.lr * (self.final_lr_ratio + (1 - self.final_lr_ratio) * c)


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, cfg: OptimizerConfig, size: int):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mhat = self.m / (1 - c.beta1 ** self.t)
        vhat = self.v / (1 - c.beta2 ** self.t)
        return theta - (c.lr if lr is None else lr) * mhat / (np.sqrt(vhat) + c.eps)


class SGD:
    def __init__(self, cfg: OptimizerConfig, size: int):
        self.cfg = cfg

    def step(self, theta, grad, lr=None):
        return theta - (self.cfg.lr if lr is None else lr) * grad


def make_optimizer(cfg: OptimizerConfig, size: int):
    return Adam(cfg, size) if cfg.name == "adam" else SGD(cfg, size)


def train(
    params0: NetworkParams,
    spec: EnergySpec,
    optimizer: OptimizerConfig,
    delta: float,
    max_steps: int,
    seed,
    N: int = 1024,
    M: int = 256,
    window: int = 200,
    kink_width: float = 0.0,
    patience: int = 1,
):
    """Minimise the penalised energy with fresh sample batches every step.

    Stops at ``max_steps`` or when the mean loss over the last ``window``
    steps improved on the window before it by less than ``delta`` on
    ``patience`` consecutive window boundaries.  Returns ``(params, trace)``:
    the parameters at the end of the window with the lowest mean loss, and
    the per-step loss estimates.  Single-batch losses are too noisy to rank iterates, so
    windows are compared instead; a trailing partial window counts too.

    ``kink_width > 0`` adds the kink-motion term to the gradient (see
    :func:`ritzkit.autodiff.masked_tangent`).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if max_steps <= 0:
        return params0, np.zeros(0)
    rng = np.random.default_rng(seed)
    opt = make_optimizer(optimizer, params0.n_params)
    theta = params0.flat()
    best_loss, best_theta = math.inf, theta
    trace: list[float] = []
    flat_checks = 0
    for step in range(max_steps):
        params = params0.with_flat(theta)
        bi = sample_interior(spec.domain, N, rng)
        bb = sample_boundary(spec.domain, M, rng)
        try:
            loss, grad = ad.value_and_grad(
                lambda net: estimate_on_batches(net, spec, bi, bb, with_stderr=False, kink_width=kink_width).total, params
            )
        except ad.NumericError as exc:
            raise TrainingDiverged(step, float(np.linalg.norm(theta)), str(exc)) from exc
        trace.append(loss)
        theta = opt.step(theta, grad, optimizer.lr_at(step, max_steps))
        if not np.all(np.isfinite(theta)):
            raise TrainingDiverged(step, float(np.linalg.norm(theta)))
        done = step + 1
        if done % window:
            continue
        cur = float(np.mean(trace[-window:]))
        if cur < best_loss:
            best_loss, best_theta = cur, theta
        if done >= 2 * window:
            prev = float(np.mean(trace[-2 * window:-window]))
            flat_checks = flat_checks + 1 if prev - cur < delta else 0
            if flat_checks >= patience:
                log.debug("plateau at step %d: window improvement %.3g < %.3g", done, prev - cur, delta)
                break
    tail = len(trace) % window
    if tail and float(np.mean(trace[-tail:])) < best_loss:
        best_theta = theta
    return params0.with_flat(best_theta), np.array(trace)


@dataclass(frozen=True)
class Rung:
    width: int
    lam: float
    delta: float
    max_steps: int = 5000
    N: int = 1024
    M: int = 256


@dataclass(frozen=True)
class LadderConfig:
    """Coupled schedule of width, penalty and tolerance, plus optimiser and seed."""

    rungs: tuple
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    depth: int | None = None
    window: int = 200
    eval_N: int = 1 << 16
    eval_M: int = 1 << 12
    resolution: int = 256
    trace_points: int = 100
    kink_width: float = 0.01
    patience: int = 3

    def __post_init__(self):
        rungs = tuple(r if isinstance(r, Rung) else Rung(**r) for r in self.rungs)
        if not rungs:
            raise ValueError("a ladder needs at least one rung")
        for a, b in zip(rungs[:-1], rungs[1:]):
            if not b.lam > a.lam:
                raise ValueError("penalties must increase strictly")
            if b.width < a.width:
                raise ValueError("widths must not decrease")
            if not b.delta < a.delta:
                raise ValueError("tolerances must decrease strictly")
        object.__setattr__(self, "rungs", rungs)

    @classmethod
    def default(cls, n_rungs: int = 3, max_steps: int = 5000, N: int = 1024, M: int = 256, **kwargs):
        """Width ``2^(n+2)``, penalty ``10^n`` and tolerance ``10^-(n+1)`` for ``n = 1..n_rungs``."""
        rungs = tuple(
            Rung(2 ** (n + 2), 10.0 ** n, 10.0 ** -(n + 1), max_steps, N, M) for n in range(1, n_rungs + 1)
        )
        return cls(rungs, **kwargs)

    @classmethod
    def from_lists(cls, widths, lambdas, deltas, max_steps=5000, N=1024, M=256, **kwargs):
        if not len(widths) == len(lambdas) == len(deltas):
            raise ValueError("widths, lambdas and deltas must have equal length")
        rungs = tuple(Rung(int(w), float(l), float(d), max_steps, N, M) for w, l, d in zip(widths, lambdas, deltas))
        return cls(rungs, **kwargs)


@dataclass
class RungReport:
    rung: int
    width: int
    lam: float
    delta: float
    steps: int
    final_loss: float
    loss_stderr: float
    l2_error: float
    h1_error: float
    quasi_min_gap: float | None
    boundary_ms: float
    seconds: float
    loss_trace: list

    def to_dict(self) -> dict:
        return asdict(self)


def _norm_of_difference(fn, domain, resolution):
    X, w = interior_nodes(domain, resolution)
    return math.sqrt(max(integrate(fn, X, w), 0.0))


def l2_error(params: NetworkParams, case: ManufacturedCase, resolution: int = 256) -> float:
    """Relative ``L^2`` error ``||u_theta - u*|| / ||u*||`` (absolute if ``||u*|| = 0``)."""
    err = _norm_of_difference(lambda X: (forward(params, X) - case.u_star(X)) ** 2, case.domain, resolution)
    ref = _norm_of_difference(lambda X: case.u_star(X) ** 2, case.domain, resolution)
    return err / ref if ref > 0 else err


def h1_seminorm_error(params: NetworkParams, case: ManufacturedCase, resolution: int = 256) -> float:
    """Relative ``H^1`` seminorm error ``||grad u_theta - grad u*|| / ||grad u*||``."""

    def diff(X):
        D = input_gradient(params, X) - case.grad_u_star(X)
        return np.sum(D * D, axis=1)

    err = _norm_of_difference(diff, case.domain, resolution)
    ref = _norm_of_difference(lambda X: np.sum(case.grad_u_star(X) ** 2, axis=1), case.domain, resolution)
    return err / ref if ref > 0 else err


def boundary_mean_square(params: NetworkParams, domain, resolution: int = 256) -> float:
    """Mean of ``u^2`` over the boundary."""
    S, w = boundary_nodes(domain, resolution)
    return integrate(lambda X: forward(params, X) ** 2, S, w) / float(np.sum(w))


def quasi_min_gap(final_loss: float, case: ManufacturedCase) -> float | None:
    """``final_loss - F_min``; ``None`` when the case has no known minimal energy."""
    if case.F_min is None:
        return None
    return final_loss - case.F_min


def _subsample(trace, k):
    if len(trace) <= k:
        return [float(v) for v in trace]
    idx = np.linspace(0, len(trace) - 1, k).round().astype(int)
    return [float(trace[i]) for i in idx]


def gamma_ladder(case: ManufacturedCase, config: LadderConfig, params0: NetworkParams | None = None, record_time=True):
    """Train one network per rung, each warm-started from the previous rung.

    Returns ``(reports, params)`` with one :class:`RungReport` per rung and
    the parameters of the last rung.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(len(config.rungs))
    d = case.dim
    params = params0
    reports = []
    for n, (rung, ss) in enumerate(zip(config.rungs, seeds), start=1):
        s_init, s_train, s_eval = ss.spawn(3)
        t0 = time.perf_counter()
        if params is None:
            params = init(architecture(d, rung.width, config.depth), s_init)
        elif any(w < rung.width for w in params.dims[1:-1]):
            s_init, s_anchor = s_init.spawn(2)
            anchors = sample_interior(case.domain, rung.width, s_anchor).points
            params = widen(params, rung.width, s_init, anchors)
        spec = EnergySpec(case.domain, case.f, case.p, rung.lam)
        params, trace = train(
            params, spec, config.optimizer, rung.delta, rung.max_steps, s_train, rung.N, rung.M,
            config.window, config.kink_width, config.patience,
        )
        est = estimate_total(params, spec, config.eval_N, config.eval_M, s_eval)
        elapsed = time.perf_counter() - t0
        report = RungReport(
            rung=n,
            width=rung.width,
            lam=rung.lam,
            delta=rung.delta,
            steps=len(trace),
            final_loss=est.total,
            loss_stderr=est.stderr,
            l2_error=l2_error(params, case, config.resolution),
            h1_error=h1_seminorm_error(params, case, config.resolution),
            quasi_min_gap=quasi_min_gap(est.total, case),
            boundary_ms=boundary_mean_square(params, case.domain, config.resolution),
            seconds=elapsed if record_time else 0.0,
            loss_trace=_subsample(trace, config.trace_points),
        )
        log.info(
            "%s rung %d: width=%d lam=%g steps=%d loss=%.5f l2=%.3e",
            case.name, n, rung.width, rung.lam, report.steps, report.final_loss, report.l2_error,
        )
        reports.append(report)
    return reports, params
