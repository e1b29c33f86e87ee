"""Muon with block-periodic orthogonalization on a simulated model-parallel cluster."""

from muonbp.estimator import BlockMuon, Muon, MuonBP, NewtonSchulzOrthogonalizer
from muonbp.linalg import (
    NSConfig,
    block_dual_norm,
    block_spectral_norm,
    dual_witness,
    frobenius_norm,
    newton_schulz,
    nuclear_norm,
    operator_norm,
    orth_exact,
    svd,
)
from muonbp.optim import OptimizerConfig, muonbp_step, ntr_step, rms_transfer_scale
from muonbp.runtime import WallModel, layout_catalog, ns_flops, run
from muonbp.sharding import BlockPartition, ShardedTensor, ShardLayout, gather, scatter
from muonbp.testbed import BlockQuadratic, MLPProblem, NoiseModel, estimate_smoothness
from muonbp.theory import BoundInputs, optimal_stepsizes, theorem2_bound

__version__ = "0.1.0"

__all__ = [
    "BlockMuon",
    "BlockPartition",
    "BlockQuadratic",
    "BoundInputs",
    "MLPProblem",
    "Muon",
    "MuonBP",
    "NSConfig",
    "NewtonSchulzOrthogonalizer",
    "NoiseModel",
    "OptimizerConfig",
    "ShardLayout",
    "ShardedTensor",
    "WallModel",
    "block_dual_norm",
    "block_spectral_norm",
    "dual_witness",
    "estimate_smoothness",
    "frobenius_norm",
    "gather",
    "layout_catalog",
    "muonbp_step",
    "newton_schulz",
    "ns_flops",
    "ntr_step",
    "nuclear_norm",
    "operator_norm",
    "optimal_stepsizes",
    "orth_exact",
    "rms_transfer_scale",
    "run",
    "scatter",
    "svd",
    "theorem2_bound",
]
