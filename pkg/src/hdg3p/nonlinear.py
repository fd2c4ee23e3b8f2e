"""Newton-Raphson and Anderson-accelerated Picard kernels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NonlinearConfig:
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    anderson_depth: int = 5
    anderson_max_iter: int = 30
    anderson_tol: float = 1e-6
    anderson_mixing: float = 1.0
    anderson_ridge: float = 1e-12
    backtracking: bool = True
    max_halvings: int = 8
    residual_guard: float = 1e-9

    def __post_init__(self):
        if self.newton_tol <= 0 or self.anderson_tol <= 0:
            raise ConfigurationError("nonlinear tolerances must be positive")
        if self.anderson_depth < 0 or self.max_halvings < 0:
            raise ConfigurationError("anderson_depth and max_halvings must be non-negative")
        if self.newton_max_iter < 1 or self.anderson_max_iter < 1:
            raise ConfigurationError("iteration caps must be at least 1")
        if not 0 < self.anderson_mixing <= 1:
            raise ConfigurationError("anderson_mixing must lie in (0, 1]")


@dataclass
class IterationRecord:
    stage: str
    iter: int
    res_norm: float
    inc_norm: float


@dataclass
class NonlinearResult:
    x: np.ndarray
    converged: bool
    history: list = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self):
        return len(self.history)


def _block_norms(dx, blocks):
    if blocks is None:
        return [float(np.max(np.abs(dx), initial=0.0))]
    return [float(np.max(np.abs(dx[b]), initial=0.0)) for b in blocks]


def newton(residual_and_solver, x0, config=NonlinearConfig(), blocks=None, callback=None):
    """Newton iteration with optional step halving.

    ``residual_and_solver(x)`` returns ``(R, solve)`` where ``solve(b)``
    returns ``J(x)^{-1} b``. Convergence requires the undamped increment
    max-norm of every block (slices in ``blocks``) to be at most
    ``config.newton_tol``. Failures are reported, not raised.
    """
    x = np.array(x0, dtype=float, copy=True)
    history = []
    try:
        R, solve = residual_and_solver(x)
    except Exception as exc:  # closure or assembly failure at the seed
        return NonlinearResult(x, False, history, f"residual evaluation failed: {exc}")
    r0 = float(np.linalg.norm(R))
    rn = r0
    for it in range(1, config.newton_max_iter + 1):
        try:
            dx = solve(-R)
        except Exception as exc:
            return NonlinearResult(x, False, history, f"linear solve failed: {exc}")
        if not np.all(np.isfinite(dx)):
            return NonlinearResult(x, False, history, "non-finite Newton increment")
        inc = _block_norms(dx, blocks)
        step = 1.0
        halvings = 0
        while True:
            xt = x + step * dx
            try:
                Rt, solve_t = residual_and_solver(xt)
                rt = float(np.linalg.norm(Rt))
                ok = np.isfinite(rt)
            except Exception:
                ok, rt = False, np.inf
            if ok and (not config.backtracking or rt <= rn or max(inc) <= config.newton_tol
                       or halvings >= config.max_halvings):
                break
            if halvings >= config.max_halvings:
                return NonlinearResult(x, False, history, "residual evaluation failed along the step")
            step *= 0.5
            halvings += 1
        x, R, solve, rn = xt, Rt, solve_t, rt
        history.append(IterationRecord("newton", it, rn, max(inc)))
        if callback is not None:
            callback(history[-1])
        if max(inc) <= config.newton_tol:
            # a damped final step must also have reduced the residual substantially
            if halvings and rn > config.residual_guard * max(r0, np.finfo(float).tiny):
                continue
            return NonlinearResult(x, True, history, "converged")
    return NonlinearResult(x, False, history, f"no convergence in {config.newton_max_iter} iterations")


def _relax(x, g, f, beta):
    # full mixing returns the map image itself so depth 0 is bitwise plain Picard
    return g if beta == 1.0 else x + beta * f


def anderson_picard(fixed_point_map, x0, config=NonlinearConfig(), callback=None):
    """Anderson-accelerated fixed-point iteration; returns the best iterate.

    ``fixed_point_map(x)`` returns g(x). Depth 0 is plain Picard. The
    iterate with the smallest fixed-point residual ||g(x) - x||_inf is
    returned in ``x``.
    """
    m = config.anderson_depth
    beta = config.anderson_mixing
    x = np.array(x0, dtype=float, copy=True)
    history = []
    best_x, best_r = x.copy(), np.inf
    dG, dF = [], []
    g_prev = f_prev = None
    for it in range(1, config.anderson_max_iter + 1):
        try:
            g = np.asarray(fixed_point_map(x), dtype=float)
        except Exception as exc:
            return NonlinearResult(best_x, False, history, f"map evaluation failed: {exc}")
        f = g - x
        r = float(np.max(np.abs(f), initial=0.0))
        history.append(IterationRecord("picard", it, r, r))
        if callback is not None:
            callback(history[-1])
        if not np.isfinite(r):
            return NonlinearResult(best_x, False, history, "non-finite fixed-point residual")
        if r < best_r:
            best_x, best_r = x.copy(), r
        if r <= config.anderson_tol:
            # the map image is at least as good as x for a contraction
            return NonlinearResult(g, True, history, "converged")
        if m == 0:
            x = _relax(x, g, f, beta)
            continue
        if g_prev is not None:
            dG.append(g - g_prev)
            dF.append(f - f_prev)
            if len(dF) > m:
                dG.pop(0)
                dF.pop(0)
        g_prev, f_prev = g, f
        if not dF:
            x = _relax(x, g, f, beta)
            continue
        Fm = np.column_stack(dF)
        Gm = np.column_stack(dG)
        gram = Fm.T @ Fm
        ridge = config.anderson_ridge * max(np.trace(gram), np.finfo(float).tiny)
        try:
            gamma = np.linalg.solve(gram + ridge * np.eye(len(dF)), Fm.T @ f)
        except np.linalg.LinAlgError:
            x = _relax(x, g, f, beta)
            continue
        if not np.all(np.isfinite(gamma)):
            x = _relax(x, g, f, beta)
            continue
        x_new = x + beta * f - (Gm - (1.0 - beta) * Fm) @ gamma
        if beta == 1.0:
            x_new = g - Gm @ gamma
        x = x_new
    return NonlinearResult(best_x, False, history, f"anderson cap of {config.anderson_max_iter} reached")
