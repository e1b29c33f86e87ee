"""scikit-learn style front ends.

``MuonBP`` is an estimator whose ``fit`` runs the optimizer on a problem
and exposes the trajectory as fitted attributes; hyperparameters go through
``get_params`` / ``set_params`` so it works with ``sklearn.base.clone`` and
parameter grids. ``NewtonSchulzOrthogonalizer`` is a stateless transformer.
"""
from __future__ import annotations

import math

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from muonbp._validation import as_matrix
from muonbp.linalg import NSConfig, newton_schulz, orth_exact
from muonbp.optim import OptimizerConfig
from muonbp.runtime import WallModel, run
from muonbp.sharding import ShardLayout


class NewtonSchulzOrthogonalizer(TransformerMixin, BaseEstimator):
    """Map a matrix to its (approximate) polar factor.

    ``method="exact"`` uses the SVD; ``"newton_schulz"`` runs ``n_iter``
    quintic iterations.
    """

    def __init__(self, method="newton_schulz", n_iter=5, coeffs=(2.0, -1.5, 0.5), epsilon=1e-7):
        self.method = method
        self.n_iter = n_iter
        self.coeffs = coeffs
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = as_matrix(X)
        if self.method not in ("exact", "newton_schulz"):
            raise ValueError(f"unknown method {self.method!r}")
        self.n_features_in_ = X.shape[1]
        self.ns_config_ = NSConfig(self.n_iter, *self.coeffs, epsilon=self.epsilon)
        return self

    def transform(self, X):
        check_is_fitted(self, "ns_config_")
        X = as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        if self.method == "exact":
            return orth_exact(X)
        return newton_schulz(X, self.ns_config_)


class MuonBP(BaseEstimator):
    """Muon with block-periodic orthogonalization.

    Parameters
    ----------
    period : int or "inf"
        Full (communicating) orthogonalization every ``period`` steps,
        starting at step 0. 1 gives Muon, "inf" gives BlockMuon.
    eta_full, eta_block : float
        Stepsizes for full and block steps; ``eta_block=None`` ties them.
    layout : str or ShardLayout
        Model-parallel layout, e.g. ``"grid(2,2)"``; blocks equal shards.
    backend : {"newton_schulz", "exact"}
    rms_beta : float or None
        Enable RMS learning-rate transfer with target RMS ``rms_beta``.
    schedule : {"constant", "linear"}
        "linear" decays both stepsizes to zero over ``steps``.

    Attributes
    ----------
    record_ : RunRecord
    params_ : dict of ndarray
        Final parameters.
    loss_curve_ : list of float
    """

    def __init__(self, period=5, eta_full=0.02, eta_block=None, momentum=0.95, layout="none",
                 backend="newton_schulz", ns_iter=5, ns_coeffs=(2.0, -1.5, 0.5), ns_epsilon=1e-7,
                 rms_beta=None, weight_decay=0.0, schedule="constant", steps=100, random_state=0,
                 bytes_per_element=4, accounting="cluster", wall=None):
        self.period = period
        self.eta_full = eta_full
        self.eta_block = eta_block
        self.momentum = momentum
        self.layout = layout
        self.backend = backend
        self.ns_iter = ns_iter
        self.ns_coeffs = ns_coeffs
        self.ns_epsilon = ns_epsilon
        self.rms_beta = rms_beta
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.steps = steps
        self.random_state = random_state
        self.bytes_per_element = bytes_per_element
        self.accounting = accounting
        self.wall = wall

    def optimizer_config(self) -> OptimizerConfig:
        layout = self.layout if isinstance(self.layout, ShardLayout) else ShardLayout.parse(self.layout)
        return OptimizerConfig(
            momentum=self.momentum,
            eta_full=self.eta_full,
            eta_block=self.eta_block,
            period=self.period,
            ns=NSConfig(self.ns_iter, *self.ns_coeffs, epsilon=self.ns_epsilon),
            rms_beta=self.rms_beta,
            layout=layout,
            backend=self.backend,
            weight_decay=self.weight_decay,
            schedule=self.schedule,
            horizon=self.steps if self.schedule == "linear" else None,
        )

    def fit(self, problem, y=None):
        """Run the optimizer on ``problem`` (a ``ProblemSpec``)."""
        cfg = self.optimizer_config()
        self.record_ = run(problem, cfg, self.steps, seed=self.random_state,
                           bytes_per_element=self.bytes_per_element, accounting=self.accounting,
                           wall=self.wall or WallModel())
        self.params_ = self.record_.final_params
        self.loss_curve_ = self.record_.column("loss")
        self.n_iter_ = len(self.record_.rows)
        return self

    def score(self, problem, y=None):
        """Negative objective at the fitted parameters (higher is better)."""
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before score")
        return -problem.objective(self.params_)


class Muon(MuonBP):
    """MuonBP pinned to period 1: every step gathers and orthogonalizes globally."""

    def __init__(self, eta_full=0.02, momentum=0.95, layout="none", backend="newton_schulz",
                 ns_iter=5, ns_coeffs=(2.0, -1.5, 0.5), ns_epsilon=1e-7, rms_beta=None,
                 weight_decay=0.0, schedule="constant", steps=100, random_state=0,
                 bytes_per_element=4, accounting="cluster", wall=None):
        super().__init__(period=1, eta_full=eta_full, eta_block=None, momentum=momentum,
                         layout=layout, backend=backend, ns_iter=ns_iter, ns_coeffs=ns_coeffs,
                         ns_epsilon=ns_epsilon, rms_beta=rms_beta, weight_decay=weight_decay,
                         schedule=schedule, steps=steps, random_state=random_state,
                         bytes_per_element=bytes_per_element, accounting=accounting, wall=wall)


class BlockMuon(MuonBP):
    """MuonBP with an infinite period: shard-local orthogonalization only."""

    def __init__(self, eta_block=0.02, momentum=0.95, layout="none", backend="newton_schulz",
                 ns_iter=5, ns_coeffs=(2.0, -1.5, 0.5), ns_epsilon=1e-7, rms_beta=None,
                 weight_decay=0.0, schedule="constant", steps=100, random_state=0,
                 bytes_per_element=4, accounting="cluster", wall=None):
        super().__init__(period=math.inf, eta_full=eta_block, eta_block=eta_block,
                         momentum=momentum, layout=layout, backend=backend, ns_iter=ns_iter,
                         ns_coeffs=ns_coeffs, ns_epsilon=ns_epsilon, rms_beta=rms_beta,
                         weight_decay=weight_decay, schedule=schedule, steps=steps,
                         random_state=random_state,
                         bytes_per_element=bytes_per_element, accounting=accounting, wall=wall)
