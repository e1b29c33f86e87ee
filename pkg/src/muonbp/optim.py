"""Trust-region steps under spectral norms: Muon, BlockMuon and MuonBP.

The MuonBP step works on one sharded tensor. Momentum always lives on the
shards; on a full step (``t % period == 0``) the momentum shards are gathered,
orthogonalized as one matrix and the update is scattered back. Otherwise every
shard is orthogonalized on its own device.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from muonbp._validation import as_matrix, check_period, check_positive
from muonbp.linalg import (
    NSConfig,
    block_spectral_norm,
    blockwise,
    newton_schulz,
    operator_norm,
    orth_exact,
)
from muonbp.sharding import (
    BlockPartition,
    ShardedTensor,
    ShardLayout,
    as_partition,
    gather,
    per_shard_map,
    scatter,
    zip_map,
)

BACKENDS = ("newton_schulz", "exact")
SCHEDULES = ("constant", "linear")


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters shared by Muon, BlockMuon and MuonBP.

    ``eta_block`` defaults to ``eta_full``. ``period=1`` is Muon and
    ``period=math.inf`` is BlockMuon. ``rms_beta=None`` disables the RMS
    learning-rate transfer scaling.
    """

    momentum: float = 0.95
    eta_full: float = 0.02
    eta_block: float | None = None
    period: int | float = 5
    ns: NSConfig = field(default_factory=NSConfig)
    rms_beta: float | None = None
    layout: ShardLayout = field(default_factory=ShardLayout)
    backend: str = "newton_schulz"
    weight_decay: float = 0.0
    schedule: str = "constant"
    horizon: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        check_positive(self.eta_full, "eta_full")
        if self.eta_block is None:
            object.__setattr__(self, "eta_block", float(self.eta_full))
        check_positive(self.eta_block, "eta_block")
        object.__setattr__(self, "period", check_period(self.period))
        if self.rms_beta is not None and self.rms_beta < 0:
            raise ValueError(f"rms_beta must be >= 0, got {self.rms_beta}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.schedule == "linear" and not (self.horizon and self.horizon >= 1):
            raise ValueError("linear schedule needs a positive horizon")
        if isinstance(self.layout, str):
            object.__setattr__(self, "layout", ShardLayout.parse(self.layout))

    def is_full_step(self, t: int) -> bool:
        return not math.isinf(self.period) and t % self.period == 0

    def lr_multiplier(self, t: int) -> float:
        """1 for a constant schedule; ``1 - t / horizon`` for linear decay."""
        if self.schedule == "constant":
            return 1.0
        return max(0.0, 1.0 - t / self.horizon)

    def orthogonalizer(self):
        if self.backend == "exact":
            return orth_exact
        ns = self.ns
        return lambda g: newton_schulz(g, ns)


@dataclass
class MomentumState:
    """Per-device momentum buffers and the step counter for one tensor."""

    buffers: ShardedTensor
    t: int = 0

    @classmethod
    def zeros(cls, shape, layout: ShardLayout) -> "MomentumState":
        return cls(scatter(np.zeros(shape), layout), 0)


@dataclass
class StepReport:
    step: int
    mode: str
    stepsize: float
    update_op_norm: float
    update_block_norm: float
    comm_elements: int = 0
    comm_bytes: int = 0
    ns_flops: int = 0
    momentum_flops: int = 0


def rms_transfer_scale(shape, beta: float) -> float:
    """Update multiplier ``beta * sqrt(max(a, b))`` giving orthogonal updates RMS ``beta``."""
    a, b = shape
    if a < 1 or b < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return beta * math.sqrt(max(a, b))


def effective_stepsize(eta: float, shape, rms_beta) -> float:
    if rms_beta is None:
        return eta
    return eta * rms_transfer_scale(shape, rms_beta)


def ntr_step(x, m, eta: float, norm="operator", orthogonalizer=orth_exact) -> np.ndarray:
    """One trust-region step ``x - eta * W`` with W the dual witness of ``m``.

    ``norm`` is ``"operator"`` or a block partition (BlockPartition, layout,
    or ``(r, c)``) for the block-spectral norm.
    """
    x = as_matrix(x, name="x")
    m = as_matrix(m, name="m")
    if x.shape != m.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs m {m.shape}")
    check_positive(eta, "eta")
    if isinstance(norm, str):
        if norm != "operator":
            raise ValueError(f"unknown norm {norm!r}")
        w = orthogonalizer(m)
    else:
        w = blockwise(m, as_partition(norm, m.shape), orthogonalizer)
    return x - eta * w


def muonbp_step(state: MomentumState, grad: ShardedTensor, cfg: OptimizerConfig,
                params: ShardedTensor):
    """Advance one tensor by one MuonBP step.

    Returns ``(new_params, report)`` and updates ``state`` in place. A
    non-finite gradient raises ``FloatingPointError`` and leaves ``state``
    untouched.
    """
    if grad.shape != params.shape or grad.layout != params.layout:
        raise ValueError("gradient and parameters must share shape and layout")
    if state.buffers.shape != params.shape or state.buffers.layout != params.layout:
        raise ValueError("momentum buffers must share shape and layout with the parameters")
    if not all(np.all(np.isfinite(g)) for g in grad):
        raise FloatingPointError(f"non-finite gradient at step {state.t}; step rejected")

    t = state.t
    mu = cfg.momentum
    orth = cfg.orthogonalizer()
    momentum = zip_map(lambda m, g: mu * m + g, state.buffers, grad)

    if cfg.is_full_step(t):
        mode = "full"
        base_eta = cfg.eta_full * cfg.lr_multiplier(t)
        stepsize = effective_stepsize(base_eta, params.shape, cfg.rms_beta)
        update = scatter(orth(gather(momentum)), params.layout)
    else:
        mode = "block"
        shard_shape = params.partition.block_shapes()[0]
        base_eta = cfg.eta_block * cfg.lr_multiplier(t)
        stepsize = effective_stepsize(base_eta, shard_shape, cfg.rms_beta)
        update = per_shard_map(momentum, orth)

    new_params = zip_map(lambda x, u: x - stepsize * u, params, update)
    if cfg.weight_decay:
        decay = 1.0 - base_eta * cfg.weight_decay
        new_params = per_shard_map(new_params, lambda x: decay * x)

    delta = gather(new_params) - gather(params)
    report = StepReport(
        step=t,
        mode=mode,
        stepsize=stepsize,
        update_op_norm=operator_norm(delta),
        update_block_norm=block_spectral_norm(delta, params.partition),
    )
    state.buffers = momentum
    state.t = t + 1
    return new_params, report


def muon_reference_step(x, m, g, cfg: OptimizerConfig, t: int = 0):
    """Unsharded Muon step on full matrices. Returns ``(x_new, m_new)``."""
    m_new = cfg.momentum * m + g
    eta = cfg.eta_full * cfg.lr_multiplier(t)
    stepsize = effective_stepsize(eta, x.shape, cfg.rms_beta)
    x_new = x - stepsize * cfg.orthogonalizer()(m_new)
    if cfg.weight_decay:
        x_new = (1.0 - eta * cfg.weight_decay) * x_new
    return x_new, m_new


def block_muon_reference_step(x, m, g, cfg: OptimizerConfig, part: BlockPartition, t: int = 0):
    """Unsharded BlockMuon step: orthogonalize each block of the full momentum."""
    m_new = cfg.momentum * m + g
    part = as_partition(part, x.shape)
    eta = cfg.eta_block * cfg.lr_multiplier(t)
    stepsize = effective_stepsize(eta, part.block_shapes()[0], cfg.rms_beta)
    x_new = x - stepsize * blockwise(m_new, part, cfg.orthogonalizer())
    if cfg.weight_decay:
        x_new = (1.0 - eta * cfg.weight_decay) * x_new
    return x_new, m_new


def sign_descent_step(x, g, lam: float) -> np.ndarray:
    """Steepest descent in the max-norm: ``x - (||g||_1 / lam) sign(g)``."""
    x = as_matrix(x, name="x")
    g = as_matrix(g, name="g")
    check_positive(lam, "lam")
    return x - (np.sum(np.abs(g)) / lam) * np.sign(g)


def sign_momentum_step(x, m, g, eta: float, momentum: float = 0.9):
    """Coordinate-wise baseline: heavy-ball momentum followed by ``-eta * sign``.

    Returns ``(x_new, m_new)``. Used only as a comparison point.
    """
    m_new = momentum * m + g
    return x - eta * np.sign(m_new), m_new
