from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdg3p.errors import ConfigurationError
from hdg3p.nonlinear import NonlinearConfig, anderson_picard, newton


def scalar_system(f, df):
    def rs(x):
        return np.array([f(x[0])]), lambda b: b / df(x[0])
    return rs


def exact_newton_iterates(x0, n):
    """Newton on x^2 - 4 in rational arithmetic."""
    x = Fraction(x0)
    out = []
    for _ in range(n):
        x = x - (x * x - 4) / (2 * x)
        out.append(x)
    return out


def test_newton_scalar_root():
    res = newton(scalar_system(lambda x: x * x - 4, lambda x: 2 * x), [3.0])
    assert res.converged and res.iterations <= 7
    assert res.x[0] == 2.0
    ref = exact_newton_iterates(3, res.iterations)
    # increments follow the rational iterates until roundoff takes over
    for rec, a, b in zip(res.history[:4], [Fraction(3)] + ref, ref):
        assert rec.inc_norm == pytest.approx(float(abs(b - a)), rel=1e-12)


def test_newton_quadratic_rate():
    res = newton(scalar_system(lambda x: x * x - 4, lambda x: 2 * x), [3.0])
    inc = [r.inc_norm for r in res.history if r.inc_norm > 0]
    ratios = [inc[i + 1] / inc[i] ** 2 for i in range(len(inc) - 4, len(inc) - 1)]
    assert max(ratios) < 1.0


def test_newton_at_root():
    res = newton(scalar_system(lambda x: x * x - 4, lambda x: 2 * x), [2.0])
    assert res.converged and res.iterations <= 1
    assert all(r.inc_norm == 0.0 for r in res.history)


def test_newton_blocks_all_checked():
    # the second block converges slowly; success requires both blocks small
    def rs(x):
        R = np.array([x[0] - 1.0, x[1] ** 3])
        return R, lambda b: np.array([b[0], b[1] / max(3 * x[1] ** 2, 1e-300)])

    cfg = NonlinearConfig(newton_max_iter=20)
    res = newton(rs, [5.0, 1.0], cfg, blocks=[slice(0, 1), slice(1, 2)])
    assert not res.converged
    assert "no convergence" in res.message


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
@settings(max_examples=50, deadline=None)
def test_newton_never_reports_large_increments(a, b):
    A = np.array([[2.0, 0.3], [0.1, 1.5]])

    def rs(x):
        R = A @ x + 0.1 * np.sin(x) - np.array([a, b])
        Jm = A + 0.1 * np.diag(np.cos(x))
        return R, lambda r: np.linalg.solve(Jm, r)

    cfg = NonlinearConfig()
    res = newton(rs, [0.0, 0.0], cfg, blocks=[slice(0, 1), slice(1, 2)])
    if res.converged:
        assert res.history[-1].inc_norm <= cfg.newton_tol


def test_newton_failures_are_results():
    def broken(x):
        return np.array([x[0]]), lambda b: (_ for _ in ()).throw(np.linalg.LinAlgError("singular"))

    res = newton(broken, [1.0])
    assert not res.converged and "linear solve failed" in res.message

    def nan_solve(x):
        return np.array([x[0]]), lambda b: b * np.nan

    assert not newton(nan_solve, [1.0]).converged


def test_newton_is_deterministic():
    rs = scalar_system(lambda x: np.exp(x) - 2.0, lambda x: np.exp(x))
    a, b = newton(rs, [3.0]), newton(rs, [3.0])
    assert a.x[0] == b.x[0] and a.history == b.history


def test_anderson_affine_map():
    cfg = NonlinearConfig(anderson_depth=1, anderson_tol=1e-12)
    res = anderson_picard(lambda x: 0.5 * x + 1.0, np.array([0.0]), cfg)
    assert res.converged and res.iterations <= 3
    assert abs(res.x[0] - 2.0) <= 1e-12


def test_anderson_depth_zero_is_plain_picard():
    def g(x):
        return np.cos(x) + 0.1 * x[::-1]

    seen = []
    cfg = NonlinearConfig(anderson_depth=0, anderson_max_iter=12, anderson_tol=1e-30)
    anderson_picard(lambda x: (seen.append(x.copy()), g(x))[1], np.array([0.3, -0.2]), cfg)
    x = np.array([0.3, -0.2])
    for got in seen:
        assert np.array_equal(got, x)
        x = g(x)


def test_anderson_linear_contraction():
    A = np.array([[0.5, 0.2], [-0.1, 0.3]])
    b = np.array([1.0, -2.0])
    fixed = np.linalg.solve(np.eye(2) - A, b)
    cfg = NonlinearConfig()
    res = anderson_picard(lambda x: A @ x + b, np.zeros(2), cfg)
    assert res.converged
    assert np.abs(res.x - fixed).max() <= cfg.anderson_tol


def test_anderson_returns_best_iterate_on_cap():
    # a divergent map: the seed is the best iterate
    res = anderson_picard(lambda x: 3.0 * x + 1.0, np.array([0.0]),
                          NonlinearConfig(anderson_depth=0, anderson_max_iter=5))
    assert not res.converged and res.x[0] == 0.0


def test_config_validation():
    for bad in ({"newton_tol": 0.0}, {"anderson_tol": -1.0}, {"anderson_depth": -1},
                {"newton_max_iter": 0}, {"anderson_max_iter": 0}, {"anderson_mixing": 0.0}):
        with pytest.raises(ConfigurationError):
            NonlinearConfig(**bad)
