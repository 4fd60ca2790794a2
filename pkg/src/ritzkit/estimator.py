"""Scikit-learn style wrapper around the growing-ladder solver.

The training data of a variational solver are sampled from the domain, so
``fit`` takes no design matrix; it accepts and ignores ``X``/``y`` to stay
compatible with sklearn tooling.  ``predict`` evaluates the trained network.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cases import ManufacturedCase, get_case
from .energy import EnergySpec, estimate_total
from .net import forward, input_gradient
from .solve import LadderConfig, OptimizerConfig, gamma_ladder


def _positive(name, value, integer=False):
    ok = isinstance(value, (int, np.integer)) if integer else isinstance(value, (int, float, np.number))
    if not ok or isinstance(value, bool) or not value > 0:
        kind = "positive integer" if integer else "positive number"
        raise ValueError(f"{name} must be a {kind}, got {value!r}")


class DeepRitzRegressor(BaseEstimator, RegressorMixin):
    """Minimise a penalised energy over ReLU networks on a ladder of widths and penalties.

    Parameters
    ----------
    case : str or ManufacturedCase
        Problem to solve; a name from the case registry or a case object.
    widths, lambdas, deltas : sequence
        Per-rung hidden width, boundary penalty and plateau tolerance.
    max_steps : int
        Step budget per rung.
    n_interior, n_boundary : int
        Fresh sample sizes per training step.
    depth : int or None
        Network depth; ``None`` picks ``ceil(log2(d + 1)) + 1``.
    lr, final_lr_ratio : float
        Adam step size and the cosine-decay floor as a fraction of it.
    kink_width : float
        Width of the kink-motion kernel in the training gradient.
    patience : int
        Consecutive flat windows needed to stop a rung early.
    random_state : int
        Seed for initialisation, sampling and evaluation.

    Attributes
    ----------
    params_ : NetworkParams
    reports_ : list of RungReport
    n_features_in_ : int
    """

    def __init__(
        self,
        case="poisson_1d_sine",
        widths=(8, 16, 32),
        lambdas=(10.0, 100.0, 1000.0),
        deltas=(1e-2, 1e-3, 1e-4),
        max_steps=5000,
        n_interior=1024,
        n_boundary=256,
        depth=None,
        lr=1e-3,
        final_lr_ratio=1.0,
        kink_width=0.01,
        patience=3,
        random_state=0,
    ):
        self.case = case
        self.widths = widths
        self.lambdas = lambdas
        self.deltas = deltas
        self.max_steps = max_steps
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.depth = depth
        self.lr = lr
        self.final_lr_ratio = final_lr_ratio
        self.kink_width = kink_width
        self.patience = patience
        self.random_state = random_state

    def _case(self) -> ManufacturedCase:
        if isinstance(self.case, ManufacturedCase):
            return self.case
        return get_case(self.case)

    def _config(self) -> LadderConfig:
        for name in ("max_steps", "n_interior", "n_boundary", "patience"):
            _positive(name, getattr(self, name), integer=True)
        _positive("lr", self.lr)
        if self.depth is not None:
            _positive("depth", self.depth, integer=True)
        if self.kink_width < 0:
            raise ValueError("kink_width must be nonnegative")
        if not isinstance(self.random_state, (int, np.integer)) or self.random_state < 0:
            raise ValueError("random_state must be a nonnegative integer")
        return LadderConfig.from_lists(
            self.widths,
            self.lambdas,
            self.deltas,
            max_steps=self.max_steps,
            N=self.n_interior,
            M=self.n_boundary,
            optimizer=OptimizerConfig(lr=float(self.lr), final_lr_ratio=float(self.final_lr_ratio)),
            seed=int(self.random_state),
            depth=self.depth,
            kink_width=float(self.kink_width),
            patience=int(self.patience),
        )

    def fit(self, X=None, y=None):
        """Run the ladder; ``X`` and ``y`` are ignored."""
        case = self._case()
        config = self._config()
        self.reports_, self.params_ = gamma_ladder(case, config, record_time=False)
        self.case_ = case
        self.n_features_in_ = case.dim
        return self

    def _points(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the solver was fitted on {self.n_features_in_}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._points(X)
        return forward(self.params_, X)

    def predict_gradient(self, X) -> np.ndarray:
        X = self._points(X)
        return input_gradient(self.params_, X)

    def energy(self, N: int = 1 << 16, M: int = 1 << 12, seed: int = 0):
        """Estimate of the last rung's penalised energy at the fitted parameters."""
        check_is_fitted(self, "params_")
        case = self.case_
        spec = EnergySpec(case.domain, case.f, case.p, float(self.lambdas[-1]))
        return estimate_total(self.params_, spec, N, M, seed)
