import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st

from muonbp.linalg import frobenius_norm
from muonbp.sharding import ShardLayout
from muonbp.testbed import BlockQuadratic, CallableProblem, MLPProblem, NoiseModel, estimate_smoothness


def _fd_check(problem, params, eps=1e-6, n=5, seed=0):
    rng = np.random.default_rng(seed)
    grad = problem.gradient(params)
    for _ in range(n):
        d = {k: rng.standard_normal(v.shape) for k, v in params.items()}
        plus = {k: params[k] + eps * d[k] for k in params}
        minus = {k: params[k] - eps * d[k] for k in params}
        fd = (problem.objective(plus) - problem.objective(minus)) / (2 * eps)
        an = sum(float(np.sum(grad[k] * d[k])) for k in params)
        assert fd == pytest.approx(an, rel=1e-6, abs=1e-8)


def test_block_quadratic_gradient_and_constants():
    q = BlockQuadratic((8, 32), (1, 4), curvature=[[1.0, 2.0, 0.5, 1.0]], seed=3)
    _fd_check(q, q.x0)
    assert q.L_B == pytest.approx(8 * (1 + 2 + 0.5 + 1))
    assert q.L_op is None
    assert q.objective({"W": q.target}) == 0.0


def test_uniform_quadratic_constants_and_estimate():
    q = BlockQuadratic.for_layout((8, 32), ShardLayout.column_parallel(4), seed=0)
    assert (q.L_op, q.L_B) == (8.0, 32.0)
    assert estimate_smoothness(q, "operator") == pytest.approx(q.L_op, rel=1e-9)
    assert estimate_smoothness(q, "block") == pytest.approx(q.L_B, rel=1e-9)
    assert estimate_smoothness(q, "frobenius") == pytest.approx(1.0, rel=1e-9)


@seed(51)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4))
def test_square_grid_ratio(r, c, p, q):
    prob = BlockQuadratic((r * p, c * q), (r, c), seed=0)
    assert prob.L_B / prob.L_op == pytest.approx(r * c * min(p, q) / min(r * p, c * q))


def test_quadratic_rejects_bad_curvature():
    with pytest.raises(ValueError):
        BlockQuadratic((4, 4), (2, 2), curvature=[[1.0, -1.0], [1.0, 1.0]])


def test_mlp_gradient_matches_finite_differences():
    p = MLPProblem((5, 7, 3), n_samples=32, batch_size=8, seed=2)
    _fd_check(p, p.x0)
    assert p.stochastic
    assert set(p.x0) == {"W1", "W2"}
    assert p.x0["W1"].shape == (7, 5)


def test_mlp_minibatch_gradient_is_unbiased():
    p = MLPProblem((4, 6, 2), n_samples=16, batch_size=4, seed=0)
    full = p.gradient(p.x0)
    per = [p.per_example_gradient(p.x0, i) for i in range(16)]
    for k in full:
        np.testing.assert_allclose(np.mean([g[k] for g in per], axis=0), full[k], atol=1e-12)


def test_full_batch_mlp_is_deterministic():
    p = MLPProblem((4, 6, 2), n_samples=16, batch_size=64, seed=0)
    assert not p.stochastic
    g1 = p.stochastic_gradient(p.x0, np.random.default_rng(0))
    g2 = p.gradient(p.x0)
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


def test_noise_model_variance():
    noise = NoiseModel(2.0)
    rng = np.random.default_rng(0)
    zeros = {"A": np.zeros((10, 10)), "B": np.zeros((5, 20))}
    sq = [sum(frobenius_norm(v) ** 2 for v in noise.perturb(zeros, rng).values()) for _ in range(2000)]
    assert np.mean(sq) == pytest.approx(4.0, rel=0.03)
    assert NoiseModel(0.0).perturb(zeros, rng) is zeros
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


def test_callable_problem():
    p = CallableProblem(lambda x: 0.5 * float(np.sum(x**2)), lambda x: x, np.ones((2, 3)),
                        L_op=1.0, L_B=1.0)
    _fd_check(p, p.x0)
    assert p.delta0 == pytest.approx(3.0)


def test_mlp_zero_init_zero_targets_is_stationary():
    p = MLPProblem((5, 7, 3), n_samples=16, seed=0, zero_init=True, zero_targets=True)
    assert p.objective(p.x0) == 0.0
    assert all(not g.any() for g in p.gradient(p.x0).values())


def test_mlp_gradient_twenty_probes_relative_error():
    p = MLPProblem((6, 10, 10, 3), n_samples=64, seed=7)
    rng = np.random.default_rng(0)
    grad = p.gradient(p.x0)
    worst = 0.0
    for _ in range(20):
        d = {k: rng.standard_normal(v.shape) for k, v in p.x0.items()}
        eps = 1e-5
        fd = (p.objective({k: p.x0[k] + eps * d[k] for k in d})
              - p.objective({k: p.x0[k] - eps * d[k] for k in d})) / (2 * eps)
        an = sum(float(np.sum(grad[k] * d[k])) for k in d)
        worst = max(worst, abs(fd - an) / abs(an))
    assert worst <= 1e-5


@pytest.mark.parametrize("shape,layout", [((8, 32), "column_parallel(4)"), ((16, 16), "grid(2,2)"),
                                          ((32, 8), "row_parallel(4)"), ((12, 12), "none")])
def test_estimated_smoothness_ratio_range(shape, layout):
    lay = ShardLayout.parse(layout)
    q = BlockQuadratic.for_layout(shape, lay, seed=0)
    ratio = estimate_smoothness(q, "block", samples=8) / estimate_smoothness(q, "operator", samples=8)
    assert 1 - 1e-9 <= ratio <= lay.world_size * (1 + 1e-9)
    if lay.world_size == 1:
        assert ratio == pytest.approx(1.0)
