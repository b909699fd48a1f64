"""Finite-difference gradient verification across all differentiable ops.

A quick pass (2 trials per case) runs here; the full >=100-instance sweep
lives in the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from sentipre.gradcheck import (CASES, REL_TOL, finite_difference,
                                max_relative_error, run_gradient_checks)
from sentipre.tensor import Tensor


def test_all_cases_pass_quick():
    results = run_gradient_checks(trials_per_case=2, seed=1)
    assert len(results) == len(CASES)
    for name, err in results:
        assert err < REL_TOL, f"{name}: {err}"


def test_results_are_deterministic():
    a = run_gradient_checks(trials_per_case=1, seed=3)
    b = run_gradient_checks(trials_per_case=1, seed=3)
    assert a == b


def test_finite_difference_on_quadratic():
    x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)

    def loss():
        from sentipre import tensor as T
        return T.tsum(T.mul(x, x))

    num = finite_difference(loss, x)
    assert np.allclose(num, 2 * x.data, atol=1e-6)


def test_max_relative_error_definition():
    a = np.array([1.0, 0.0])
    b = np.array([1.0, 0.0])
    assert max_relative_error(a, b) == 0.0
    assert max_relative_error(np.array([1.0]), np.array([1.1])) > 0.04
