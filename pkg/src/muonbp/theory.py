"""Closed-form stepsizes and convergence-bound evaluation.

``theorem2_bound`` evaluates the MuonBP guarantee on
``min_t ||grad f(X_t)||_nuclear`` for a horizon divisible by the period;
``ntr_bound`` is the single-norm trust-region guarantee it generalizes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

from muonbp._validation import check_period


class OptimalStepsizes(NamedTuple):
    eta_full: float
    eta_block: float
    L_bp: float
    eta_tied: float
    L_bp2: float


def _fractions(period):
    """Return (weight of full steps, weight of block steps)."""
    if math.isinf(period):
        return 0.0, 1.0
    return 1.0 / period, (period - 1) / period


def harmonic_smoothness(L_op: float, L_B: float, period) -> float:
    wf, wb = _fractions(check_period(period))
    return 1.0 / (wf / L_op + wb / L_B)


def arithmetic_smoothness(L_op: float, L_B: float, period) -> float:
    wf, wb = _fractions(check_period(period))
    return wf * L_op + wb * L_B


def optimal_stepsizes(L_op: float, L_B: float, delta0: float, T: int, period) -> OptimalStepsizes:
    """Noise-free, momentum-free optimal stepsize pair and the tied alternative."""
    for name, v in (("L_op", L_op), ("L_B", L_B), ("delta0", delta0), ("T", T)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if L_op > L_B:
        warnings.warn(f"L_op={L_op} exceeds L_B={L_B}; block smoothness is normally the larger",
                      stacklevel=2)
    L_bp = harmonic_smoothness(L_op, L_B, period)
    L_bp2 = arithmetic_smoothness(L_op, L_B, period)
    root = math.sqrt(2.0 * delta0 / T * L_bp)
    return OptimalStepsizes(
        eta_full=root / L_op,
        eta_block=root / L_B,
        L_bp=L_bp,
        eta_tied=math.sqrt(2.0 * delta0 / (T * L_bp2)),
        L_bp2=L_bp2,
    )


@dataclass(frozen=True)
class BoundInputs:
    eta_full: float
    eta_block: float
    period: int | float
    T: int
    momentum: float
    sigma: float
    delta0: float
    L_op: float
    L_B: float
    r: int = 1
    c: int = 1

    def __post_init__(self):
        object.__setattr__(self, "period", check_period(self.period))
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not math.isinf(self.period) and self.T % self.period:
            raise ValueError(f"horizon T={self.T} is not divisible by period P={self.period}")

    @property
    def eta_bar(self) -> float:
        wf, wb = _fractions(self.period)
        return self.eta_full * wf + self.eta_block * wb

    @property
    def eta_max(self) -> float:
        return max(self.eta_full, self.eta_block)

    @property
    def A(self) -> float:
        return max(self.eta_full * math.sqrt(self.L_op), self.eta_block * math.sqrt(self.L_B))

    @property
    def Q(self) -> float:
        wf, wb = _fractions(self.period)
        return self.L_op * self.eta_full**2 / 2 * wf + self.L_B * self.eta_block**2 / 2 * wb

    @property
    def R(self) -> float:
        wf, wb = _fractions(self.period)
        mu = self.momentum
        ef, eb = self.eta_full, self.eta_block
        full = self.L_op * ef * max(eb * math.sqrt(self.r * self.c), ef) * wf
        block = self.L_B * eb * max(ef, eb) * wb
        return 2 * mu / (1 - mu) * (full + block)


def theorem2_bound(inputs: BoundInputs) -> float:
    """Upper bound on min over t < T of the nuclear norm of the gradient."""
    p = inputs
    mu, sigma, T = p.momentum, p.sigma, p.T
    eta_bar = p.eta_bar
    return (
        p.delta0 / (eta_bar * T)
        + 4 * (1 - mu) * sigma * p.eta_max / (eta_bar * T)
        + 6 * mu * math.sqrt(p.delta0) * p.A / ((1 - mu) * eta_bar * T)
        + (p.Q + p.R) / eta_bar
        + 2 * sigma * math.sqrt((1 - mu) / (1 + mu))
    )


def ntr_bound(eta: float, momentum: float, sigma: float, delta0: float, L: float, T: int,
              rho: float = 1.0) -> float:
    """Single-norm trust-region guarantee on ``min_t E||grad f(X_t)||_*``."""
    mu = momentum
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {mu}")
    return (
        delta0 / (eta * T)
        + 3 * math.sqrt(L * delta0) / T * mu / (1 - mu)
        + 2 * (1 - mu) * rho * sigma / T
        + L * eta * mu / (1 - mu)
        + rho * sigma * math.sqrt((1 - mu) / (1 + mu))
        + L * eta / 2
    )


def tied_bound(L_op, L_B, delta0, T, period, r=1, c=1) -> float:
    """theorem2_bound at the optimal single (tied) stepsize, noise- and momentum-free."""
    eta = optimal_stepsizes(L_op, L_B, delta0, T, period).eta_tied
    return theorem2_bound(BoundInputs(eta, eta, period, T, 0.0, 0.0, delta0, L_op, L_B, r, c))


def two_stepsize_bound(L_op, L_B, delta0, T, period, r=1, c=1) -> float:
    """theorem2_bound at the optimal (eta_full, eta_block) pair, noise- and momentum-free."""
    opt = optimal_stepsizes(L_op, L_B, delta0, T, period)
    return theorem2_bound(BoundInputs(opt.eta_full, opt.eta_block, period, T, 0.0, 0.0,
                                      delta0, L_op, L_B, r, c))
