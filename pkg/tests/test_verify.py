import numpy as np
import pytest

from muonbp.linalg import dual_witness
from muonbp.verify import (
    conditioned_matrix,
    run_suite,
    suite_duality,
    suite_norms,
    suite_ns,
)


def test_conditioned_matrix_spectrum():
    x = conditioned_matrix(np.random.default_rng(0), (10, 20), cond=15.0)
    s = np.linalg.svd(x, compute_uv=False)
    assert s.max() == pytest.approx(15.0) and s.min() == pytest.approx(1.0)


def test_suites_pass_small():
    assert all(r.passed for r in suite_norms(40, seed=3))
    assert all(r.passed for r in suite_duality(40, seed=3))
    assert all(r.passed for r in suite_ns(20, seed=3))


def test_corrupted_witness_is_caught():
    results = suite_duality(20, seed=0, witness=lambda x, p: -dual_witness(x, p))
    assert not results[0].passed
    scaled = suite_duality(20, seed=0, witness=lambda x, p: 1.5 * dual_witness(x, p))
    assert not scaled[1].passed


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("everything")


def test_result_line_format():
    line = suite_norms(5)[0].line()
    assert line.startswith("PASS") and "worst slack" in line
