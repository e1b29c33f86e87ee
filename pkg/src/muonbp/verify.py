"""Seeded property suites for the norm, duality, Newton-Schulz and bound claims.

Each suite returns a list of ``CheckResult``; ``slack`` is the worst observed
margin (positive means the inequality held with room to spare, relative to
the size of the quantities compared).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from muonbp.linalg import (
    NSConfig,
    block_dual_norm,
    block_spectral_norm,
    dual_witness,
    frobenius_norm,
    inner,
    newton_schulz,
    ns_scalar,
    nuclear_norm,
    operator_norm,
    orth_exact,
)
from muonbp.optim import OptimizerConfig
from muonbp.runtime import run
from muonbp.sharding import BlockPartition, ShardLayout
from muonbp.testbed import BlockQuadratic
from muonbp.theory import (
    BoundInputs,
    optimal_stepsizes,
    theorem2_bound,
    tied_bound,
    two_stepsize_bound,
)

PARTITIONS = ((1, 1), (2, 2), (4, 2), (1, 8), (8, 1))
SUITES = ("norms", "duality", "ns", "bounds")

REL_TOL = 1e-9


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    slack: float
    samples: int

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.suite:8s} {self.name:48s} worst slack {self.slack:+.3e}  (n={self.samples})"


class _Tracker:
    """Accumulates the worst relative margin of ``lhs <= rhs`` checks."""

    def __init__(self, suite, name, tol=REL_TOL):
        self.suite, self.name, self.tol = suite, name, tol
        self.worst = math.inf
        self.n = 0

    def le(self, lhs, rhs):
        scale = max(abs(lhs), abs(rhs), 1e-300)
        self.worst = min(self.worst, (rhs - lhs) / scale)
        self.n += 1

    def abs_le(self, lhs, rhs):
        self.worst = min(self.worst, rhs - lhs)
        self.n += 1

    def eq(self, a, b):
        scale = max(abs(a), abs(b), 1e-300)
        self.worst = min(self.worst, -abs(a - b) / scale)
        self.n += 1

    def result(self) -> CheckResult:
        return CheckResult(self.suite, self.name, self.worst >= -self.tol, self.worst, self.n)


def random_case(rng: np.random.Generator, max_rows=64, max_cols=96, partitions=PARTITIONS):
    """Random matrix and partition: shape up to ``max_rows x max_cols``, divisible by the grid."""
    r, c = partitions[rng.integers(len(partitions))]
    m = r * int(rng.integers(1, max_rows // r + 1))
    n = c * int(rng.integers(1, max_cols // c + 1))
    x = rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-2, 2)
    return x, BlockPartition.uniform((m, n), r, c)


def conditioned_matrix(rng: np.random.Generator, shape, cond=20.0):
    """Random matrix whose singular values are log-uniform in [1, cond]."""
    m, n = shape
    k = min(m, n)
    u, _ = np.linalg.qr(rng.standard_normal((m, k)))
    v, _ = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.sort(np.exp(rng.uniform(0.0, math.log(cond), k)))[::-1]
    s[0], s[-1] = cond, 1.0
    return (u * s) @ v.T


def suite_norms(samples=200, seed=0):
    rng = np.random.default_rng(seed)
    t = {k: _Tracker("norms", k) for k in (
        "B(G) <= op(G)", "op(G) <= sqrt(rc) B(G)",
        "nuc(G) <= B*(G)", "B*(G) <= sqrt(rc) nuc(G)",
        "op(G) <= fro(G)", "B(G) <= fro(G)")}
    for _ in range(samples):
        g, part = random_case(rng)
        root = math.sqrt(part.n_blocks)
        b, op = block_spectral_norm(g, part), operator_norm(g)
        bd, nuc = block_dual_norm(g, part), nuclear_norm(g)
        fro = frobenius_norm(g)
        t["B(G) <= op(G)"].le(b, op)
        t["op(G) <= sqrt(rc) B(G)"].le(op, root * b)
        t["nuc(G) <= B*(G)"].le(nuc, bd)
        t["B*(G) <= sqrt(rc) nuc(G)"].le(bd, root * nuc)
        t["op(G) <= fro(G)"].le(op, fro)
        t["B(G) <= fro(G)"].le(b, fro)
    return [tr.result() for tr in t.values()]


def suite_duality(samples=200, seed=0, feasible_per_sample=10, witness=dual_witness):
    rng = np.random.default_rng(seed)
    attain = _Tracker("duality", "<X, Z*> = B*(X)")
    feasible_w = _Tracker("duality", "B(Z*) <= 1")
    upper = _Tracker("duality", "<X, G> <= B*(X) for B(G) <= 1")
    for _ in range(samples):
        x, part = random_case(rng)
        z = witness(x, part)
        bd = block_dual_norm(x, part)
        attain.eq(inner(x, z), bd)
        feasible_w.le(block_spectral_norm(z, part), 1.0)
        for _ in range(feasible_per_sample):
            g = rng.standard_normal(x.shape)
            g /= block_spectral_norm(g, part)
            upper.le(inner(x, g), bd)
    return [attain.result(), feasible_w.result(), upper.result()]


def ns_oracle_distance(g, cfg: NSConfig | None = None) -> float:
    """Predicted ``||NS(g) - orth(g)||_F / sqrt(min(m, n))`` from the exact spectrum."""
    cfg = cfg or NSConfig()
    s = np.linalg.svd(g, compute_uv=False)
    mapped = ns_scalar(s / (np.linalg.norm(g) + cfg.epsilon), cfg)
    return float(np.linalg.norm(mapped - 1.0) / math.sqrt(len(s)))


def suite_ns(samples=100, seed=0, cfg: NSConfig | None = None):
    cfg = cfg or NSConfig()
    rng = np.random.default_rng(seed)
    spectral = _Tracker("ns", "sv(NS(G)) = scalar quintic", tol=0.0)
    distance = _Tracker("ns", "||NS(G) - orth(G)|| <= oracle", tol=0.0)
    for _ in range(samples):
        shape = (int(rng.integers(2, 65)), int(rng.integers(2, 97)))
        g = conditioned_matrix(rng, shape, cond=float(rng.uniform(1.0, 20.0)))
        out = newton_schulz(g, cfg)
        s = np.linalg.svd(g, compute_uv=False)
        predicted = np.sort(np.abs(ns_scalar(s / (np.linalg.norm(g) + cfg.epsilon), cfg)))[::-1]
        got = np.linalg.svd(out, compute_uv=False)
        spectral.abs_le(float(np.max(np.abs(got - predicted))), 1e-8)
        dist = np.linalg.norm(out - orth_exact(g)) / math.sqrt(min(shape))
        distance.le(dist, ns_oracle_distance(g, cfg) + 1e-8)
    return [spectral.result(), distance.result()]


def bound_problems(seed=0):
    """BlockQuadratics with analytic constants: (problem, layout) pairs."""
    return [
        (BlockQuadratic((8, 32), (1, 4), curvature=1.0, seed=seed), ShardLayout.column_parallel(4)),
        (BlockQuadratic((16, 16), (2, 2), curvature=0.5, seed=seed + 1), ShardLayout.grid(2, 2)),
        (BlockQuadratic((24, 8), (3, 1), curvature=2.0, seed=seed + 2), ShardLayout.row_parallel(3)),
    ]


def suite_bounds(seed=0, T=60, periods=(1, 2, 5, math.inf), momenta=(0.0, 0.5)):
    closed = _Tracker("bounds", "bound at optimal stepsizes = closed form", tol=1e-12)
    observed = _Tracker("bounds", "min_t nuc(grad) <= theorem bound")
    ordering = _Tracker("bounds", "two-stepsize bound < tied bound", tol=0.0)
    descent = _Tracker("bounds", "one-step descent inequality")
    energy = _Tracker("bounds", "nuc(grad)^2 <= 2 L_op (f - f*)")
    for problem, layout in bound_problems(seed):
        r, c = layout.grid_shape
        L_op, L_B, d0 = problem.L_op, problem.L_B, problem.delta0
        for P in periods:
            opt = optimal_stepsizes(L_op, L_B, d0, T, P)
            two = two_stepsize_bound(L_op, L_B, d0, T, P, r, c)
            closed.eq(two, math.sqrt(2 * d0 * opt.L_bp / T))
            # both regimes must occur for the two stepsizes to differ
            if L_B > L_op and 1 < P < math.inf:
                ordering.le(two * (1 + 1e-12), tied_bound(L_op, L_B, d0, T, P, r, c))
            for mu in momenta:
                cfg = OptimizerConfig(momentum=mu, eta_full=opt.eta_full, eta_block=opt.eta_block,
                                      period=P, layout=layout, backend="exact")
                record, trace = run_with_trace(problem, cfg, T)
                bound = theorem2_bound(BoundInputs(opt.eta_full, opt.eta_block, P, T, mu, 0.0, d0,
                                                   L_op, L_B, r, c))
                observed.le(record.min_grad_dual_op, bound)
                for step in trace:
                    descent.le(step["f_next"], step["descent_rhs"])
                    energy.le(step["grad_nuc"] ** 2, 2 * L_op * (step["f"] - problem.f_star))
    return [closed.result(), observed.result(), ordering.result(), descent.result(), energy.result()]


def descent_rhs(f, grad, momentum_buf, mu, eta, L, part=None):
    """Right side of the one-step descent inequality in the step's own norm."""
    if part is None:
        dual = nuclear_norm
    else:
        def dual(x):
            return block_dual_norm(x, part)
    return f - eta * dual(grad) + 2 * eta * dual(grad - (1 - mu) * momentum_buf) + 1.5 * L * eta**2


def run_with_trace(problem, cfg: OptimizerConfig, T: int):
    """Run and also evaluate per-step descent quantities (single-tensor problems)."""
    record = run(problem, cfg, T)
    part = problem.partition
    x = problem.x0["W"]
    m = np.zeros_like(x)
    trace = []
    for t, row in enumerate(record.rows):
        grad = problem.gradient({"W": x})["W"]
        m = cfg.momentum * m + grad
        full = cfg.is_full_step(t)
        eta = cfg.eta_full if full else cfg.eta_block
        f = problem.objective({"W": x})
        x_next = x - eta * (orth_exact(m) if full else dual_witness(m, part))
        f_next = problem.objective({"W": x_next})
        L = problem.L_op if full else problem.L_B
        trace.append({
            "f": f,
            "f_next": f_next,
            "grad_nuc": nuclear_norm(grad),
            "descent_rhs": descent_rhs(f, grad, m, cfg.momentum, eta, L, None if full else part),
        })
        x = x_next
    return record, trace


def run_suite(name: str, samples: int = 200, seed: int = 0, corrupt_witness: bool = False):
    if name == "norms":
        return suite_norms(samples, seed)
    if name == "duality":
        witness = (lambda x, p: -dual_witness(x, p)) if corrupt_witness else dual_witness
        return suite_duality(samples, seed, witness=witness)
    if name == "ns":
        return suite_ns(min(samples, 100), seed)
    if name == "bounds":
        return suite_bounds(seed)
    if name == "all":
        out = []
        for suite in SUITES:
            out.extend(run_suite(suite, samples, seed, corrupt_witness))
        return out
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
