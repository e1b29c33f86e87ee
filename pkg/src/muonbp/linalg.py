"""Dense matrix primitives: SVD, polar factors, Newton-Schulz, and the norms
used by the block-periodic optimizers.

Every function takes and returns plain 2-D ``float64`` numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from muonbp._validation import as_matrix
from muonbp.sharding import as_partition

__all__ = [
    "NSConfig",
    "SvdFactors",
    "svd",
    "orth_exact",
    "newton_schulz",
    "ns_scalar",
    "ns_overshoot",
    "frobenius_norm",
    "operator_norm",
    "nuclear_norm",
    "block_spectral_norm",
    "block_dual_norm",
    "dual_witness",
    "blockwise",
    "inner",
]


class SvdFactors(NamedTuple):
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class NSConfig:
    """Quintic Newton-Schulz settings. Defaults are the (2, -1.5, 0.5) map."""

    iterations: int = 5
    coeff_a: float = 2.0
    coeff_b: float = -1.5
    coeff_c: float = 0.5
    epsilon: float = 1e-7

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be a positive integer, got {self.iterations}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def svd(x) -> SvdFactors:
    """Thin SVD with a fixed sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry
    is nonnegative (lowest index wins ties); the matching right vector is
    flipped with it. Repeated calls on the same input are bit-identical.
    """
    x = as_matrix(x, name="x")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    u = u * signs
    v = vt.T * signs
    return SvdFactors(u, s, v)


def _rank_cut(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(shape) * np.finfo(np.float64).eps * s[0]
    return int(np.count_nonzero(s > tol))


def orth_exact(g) -> np.ndarray:
    """Polar factor ``U V^T`` on the numerically nonzero singular subspace."""
    g = as_matrix(g, name="g")
    u, s, v = svd(g)
    k = _rank_cut(s, g.shape)
    return u[:, :k] @ v[:, :k].T


def newton_schulz(g, cfg: NSConfig | None = None) -> np.ndarray:
    """Approximate orthogonalization by the quintic Newton-Schulz iteration.

    The input is scaled by its Frobenius norm (plus ``cfg.epsilon``) so every
    singular value starts in [0, 1]. Tall inputs are transposed so the Gram
    matrix is formed on the smaller side.
    """
    cfg = cfg or NSConfig()
    g = as_matrix(g, name="g")
    x = g / (np.linalg.norm(g) + cfg.epsilon)
    transposed = x.shape[0] > x.shape[1]
    if transposed:
        x = x.T
    a, b, c = cfg.coeff_a, cfg.coeff_b, cfg.coeff_c
    for _ in range(cfg.iterations):
        gram = x @ x.T
        poly = b * gram + c * (gram @ gram)
        x = a * x + poly @ x
    if transposed:
        x = x.T
    return np.ascontiguousarray(x)


def ns_scalar(sigma, cfg: NSConfig | None = None):
    """Apply the scalar map ``s -> a s + b s^3 + c s^5`` ``cfg.iterations`` times."""
    cfg = cfg or NSConfig()
    s = np.asarray(sigma, dtype=np.float64)
    for _ in range(cfg.iterations):
        s = cfg.coeff_a * s + cfg.coeff_b * s**3 + cfg.coeff_c * s**5
    return s


def ns_overshoot(cfg: NSConfig | None = None, grid: int = 200_001) -> float:
    """Largest amount by which an NS output singular value can exceed 1.

    Inputs are Frobenius-normalized, so the starting spectrum lies in [0, 1];
    the supremum of the iterated scalar map over a dense grid of [0, 1] is
    returned, padded by 1e-9 for the grid spacing.
    """
    s = ns_scalar(np.linspace(0.0, 1.0, grid), cfg)
    return max(float(np.max(np.abs(s))) - 1.0, 0.0) + 1e-9


def frobenius_norm(x) -> float:
    return float(np.linalg.norm(as_matrix(x, name="x")))


def operator_norm(x) -> float:
    x = as_matrix(x, name="x")
    if x.size == 0:
        return 0.0
    return float(np.linalg.svd(x, compute_uv=False)[0])


def nuclear_norm(x) -> float:
    x = as_matrix(x, name="x")
    return float(np.sum(np.linalg.svd(x, compute_uv=False)))


def inner(x, y) -> float:
    """Trace inner product <x, y>."""
    return float(np.sum(np.asarray(x) * np.asarray(y)))


def _blocks(x, part):
    part = as_partition(part, x.shape)
    return part.blocks(x)


def blockwise(x, part, fn) -> np.ndarray:
    """Apply ``fn`` to each block of ``x`` under ``part`` and reassemble."""
    x = as_matrix(x, name="x")
    part = as_partition(part, x.shape)
    out = np.empty_like(x)
    for (rs, cs), block in zip(part.slices(), part.blocks(x)):
        y = fn(block)
        if y.shape != block.shape:
            raise ValueError(f"block function changed shape {block.shape} -> {y.shape}")
        out[rs, cs] = y
    return out


def block_spectral_norm(x, part) -> float:
    """max over blocks of the block's operator norm."""
    x = as_matrix(x, name="x")
    return max(operator_norm(b) for b in _blocks(x, part))


def block_dual_norm(x, part) -> float:
    """Sum over blocks of the block's nuclear norm (dual of the block-spectral norm)."""
    x = as_matrix(x, name="x")
    return float(sum(nuclear_norm(b) for b in _blocks(x, part)))


def dual_witness(x, part) -> np.ndarray:
    """Maximizer of <x, z> over block_spectral_norm(z) <= 1.

    Blockwise polar factors; zero blocks map to zero.
    """
    return blockwise(x, part, orth_exact)
