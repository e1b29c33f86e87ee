"""Test problems with known smoothness, a gradient-noise model, and a
smoothness estimator.

Parameters are always a dict ``{name: 2-D array}`` so single-matrix and
multi-layer problems share one interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from muonbp.linalg import (
    block_dual_norm,
    block_spectral_norm,
    blockwise,
    frobenius_norm,
    nuclear_norm,
    operator_norm,
    orth_exact,
)
from muonbp.sharding import ShardLayout, as_partition


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian gradient noise with total Frobenius variance ``sigma**2``."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def perturb(self, grads: dict, rng: np.random.Generator) -> dict:
        if self.sigma == 0:
            return grads
        size = sum(g.size for g in grads.values())
        std = self.sigma / math.sqrt(size)
        return {k: g + std * rng.standard_normal(g.shape) for k, g in sorted(grads.items())}


class ProblemSpec:
    """Differentiable objective over named matrices.

    Subclasses set ``x0``, ``f_star`` (a known optimum value or lower bound)
    and optionally analytic ``L_op`` / ``L_B`` and implement ``objective``
    and ``gradient``.
    """

    name = "problem"
    x0: dict
    f_star: float = 0.0
    L_op: float | None = None
    L_B: float | None = None
    noise: NoiseModel = NoiseModel()

    def objective(self, params: dict) -> float:
        raise NotImplementedError

    def gradient(self, params: dict) -> dict:
        raise NotImplementedError

    def stochastic_gradient(self, params: dict, rng: np.random.Generator) -> dict:
        return self.noise.perturb(self.gradient(params), rng)

    @property
    def stochastic(self) -> bool:
        return self.noise.sigma > 0

    @property
    def delta0(self) -> float:
        return self.objective(self.x0) - self.f_star

    @property
    def shapes(self) -> dict:
        return {k: v.shape for k, v in self.x0.items()}


class CallableProblem(ProblemSpec):
    """Wrap a pair of single-matrix callables ``f(X)`` and ``grad(X)``."""

    def __init__(self, f, grad, x0, f_star=0.0, L_op=None, L_B=None, noise=None, name="callable"):
        self._f, self._grad = f, grad
        self.x0 = {"W": np.asarray(x0, dtype=np.float64)}
        self.f_star, self.L_op, self.L_B = f_star, L_op, L_B
        self.noise = noise or NoiseModel()
        self.name = name

    def objective(self, params):
        return float(self._f(params["W"]))

    def gradient(self, params):
        return {"W": np.asarray(self._grad(params["W"]), dtype=np.float64)}


class BlockQuadratic(ProblemSpec):
    """``f(X) = sum_ij (c_ij / 2) ||X_ij - X*_ij||_F^2`` over a block partition.

    ``curvature`` is a scalar (uniform) or an ``r x c`` array. ``L_B`` is
    ``sum_ij c_ij * min(p_ij, q_ij)``. ``L_op`` is analytic only for uniform
    curvature, where it equals ``c * min(m, n)``; otherwise it is None.
    """

    name = "block_quadratic"

    def __init__(self, shape, partition=(1, 1), curvature=1.0, target=None, x0=None,
                 sigma=0.0, seed=0):
        rng = np.random.default_rng(seed)
        shape = tuple(int(s) for s in shape)
        self.partition = as_partition(partition, shape)
        coeffs = np.broadcast_to(np.asarray(curvature, dtype=np.float64),
                                 (self.partition.r, self.partition.c)).copy()
        if np.any(coeffs <= 0):
            raise ValueError("block curvature coefficients must be positive")
        self.coeffs = coeffs
        self.target = rng.standard_normal(shape) if target is None else np.asarray(target, float)
        start = self.target + rng.standard_normal(shape) if x0 is None else np.asarray(x0, float)
        self.x0 = {"W": start}
        self.f_star = 0.0
        self.noise = NoiseModel(sigma)
        flat = coeffs.ravel()
        self.L_B = float(sum(cij * min(s) for cij, s in zip(flat, self.partition.block_shapes())))
        self.L_op = float(flat[0] * min(shape)) if np.all(flat == flat[0]) else None

    @classmethod
    def for_layout(cls, shape, layout: ShardLayout, **kwargs) -> "BlockQuadratic":
        if isinstance(layout, str):
            layout = ShardLayout.parse(layout)
        return cls(shape, partition=layout.grid_shape, **kwargs)

    def _scale(self) -> np.ndarray:
        out = np.empty(self.partition.shape)
        for (rs, cs), cij in zip(self.partition.slices(), self.coeffs.ravel()):
            out[rs, cs] = cij
        return out

    def objective(self, params):
        d = params["W"] - self.target
        return float(0.5 * np.sum(self._scale() * d * d))

    def gradient(self, params):
        return {"W": self._scale() * (params["W"] - self.target)}


class MLPProblem(ProblemSpec):
    """Tanh MLP regression onto a fixed teacher network of the same shape.

    Weights are ``(fan_out, fan_in)`` matrices named ``W1..WL``; no biases.
    The loss is ``(1 / 2N) sum ||net(x) - y||^2``, so ``f_star = 0`` is a
    valid lower bound (attained by the teacher). Minibatches of
    ``batch_size`` give the stochastic gradient.
    """

    name = "mlp"

    def __init__(self, widths, n_samples=1024, batch_size=64, seed=0, teacher_scale=1.0,
                 init_scale=1.0, zero_init=False, zero_targets=False):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 3:
            raise ValueError("widths must define at least two weight matrices")
        rng = np.random.default_rng(seed)
        self.widths = widths
        self.batch_size = int(batch_size)
        self.inputs = rng.standard_normal((n_samples, widths[0]))
        teacher = {f"W{k + 1}": teacher_scale * rng.standard_normal((o, i)) / math.sqrt(i)
                   for k, (i, o) in enumerate(zip(widths, widths[1:]))}
        self.teacher = teacher
        if zero_targets:
            self.targets = np.zeros((n_samples, widths[-1]))
        else:
            self.targets = self._forward(teacher, self.inputs)[-1]
        if zero_init:
            self.x0 = {k: np.zeros_like(v) for k, v in teacher.items()}
        else:
            self.x0 = {f"W{k + 1}": init_scale * rng.standard_normal((o, i)) / math.sqrt(i)
                       for k, (i, o) in enumerate(zip(widths, widths[1:]))}
        self.f_star = 0.0

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def stochastic(self) -> bool:
        return self.batch_size < self.n_samples

    def _forward(self, params, x):
        acts = [x]
        n = len(self.widths) - 1
        for k in range(1, n + 1):
            z = acts[-1] @ params[f"W{k}"].T
            acts.append(np.tanh(z) if k < n else z)
        return acts

    def _loss_grad(self, params, idx):
        x, y = self.inputs[idx], self.targets[idx]
        acts = self._forward(params, x)
        resid = acts[-1] - y
        loss = 0.5 * float(np.sum(resid * resid)) / len(idx)
        n = len(self.widths) - 1
        grads = {}
        delta = resid / len(idx)
        for k in range(n, 0, -1):
            grads[f"W{k}"] = delta.T @ acts[k - 1]
            if k > 1:
                delta = (delta @ params[f"W{k}"]) * (1.0 - acts[k - 1] ** 2)
        return loss, dict(sorted(grads.items()))

    def batch_indices(self, rng: np.random.Generator):
        if self.batch_size >= self.n_samples:
            return np.arange(self.n_samples)
        return np.sort(rng.choice(self.n_samples, self.batch_size, replace=False))

    def objective(self, params):
        return self._loss_grad(params, np.arange(self.n_samples))[0]

    def gradient(self, params):
        return self._loss_grad(params, np.arange(self.n_samples))[1]

    def per_example_gradient(self, params, i: int) -> dict:
        return self._loss_grad(params, np.array([i]))[1]

    def stochastic_gradient(self, params, rng):
        return self._loss_grad(params, self.batch_indices(rng))[1]


def _norm_pair(norm, shape, partition):
    """Return (primal norm, dual norm) callables for a norm name."""
    if norm == "frobenius":
        return frobenius_norm, frobenius_norm
    if norm == "operator":
        return operator_norm, nuclear_norm
    if norm == "block":
        if partition is None:
            raise ValueError("block norm needs a partition")
        part = as_partition(partition, shape)
        return (lambda x: block_spectral_norm(x, part)), (lambda x: block_dual_norm(x, part))
    raise ValueError(f"unknown norm {norm!r}")


def estimate_smoothness(problem: ProblemSpec, norm="operator", samples=32, seed=0,
                        partition=None, tensor=None) -> float:
    """Certified lower bound on the smoothness constant of ``problem``.

    Takes the largest observed ``||grad(X + D) - grad(X)||_dual / ||D||`` over
    random base points and directions. Directions include Gaussian matrices,
    their full polar factors, and their blockwise polar factors; for
    quadratics the polar directions are tight, so the estimate is exact there.
    Other tensors (multi-matrix problems) are held at ``x0``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    tensor = tensor or sorted(problem.x0)[0]
    base = problem.x0[tensor]
    shape = base.shape
    if isinstance(partition, ShardLayout):
        partition = partition.grid_shape
    if norm == "block" and partition is None:
        partition = getattr(problem, "partition", None)
    primal, dual = _norm_pair(norm, shape, partition)
    part = as_partition(partition, shape) if partition is not None else None
    rng = np.random.default_rng(seed)

    def grad_at(x):
        params = dict(problem.x0)
        params[tensor] = x
        return problem.gradient(params)[tensor]

    best = 0.0
    for _ in range(samples):
        x = base + rng.standard_normal(shape)
        g = rng.standard_normal(shape)
        directions = [g, orth_exact(g)]
        if part is not None:
            directions.append(blockwise(g, part, orth_exact))
        gx = grad_at(x)
        for d in directions:
            scale = 10.0 ** rng.uniform(-3, 0)
            d = scale * d
            size = primal(d)
            if size == 0:
                continue
            best = max(best, dual(grad_at(x + d) - gx) / size)
    return best
