"""Bounded Levenberg-Marquardt least squares.

Damped Gauss-Newton steps with Marquardt's diagonal scaling; trial points are
projected onto the box bounds and only accepted when the cost decreases, so
the recorded cost sequence is strictly decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LAMBDA_MAX = 1e16


@dataclass
class LsqResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    converged: bool
    n_iter: int
    costs: list = field(default_factory=list)
    message: str = ""


def _rel_step(x_new, x_old, scale):
    return float(np.max(np.abs(x_new - x_old) / np.maximum(np.abs(x_old), scale)))


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0,
    lower=None,
    upper=None,
    xtol: float = 1e-8,
    max_iter: int = 500,
    lam0: float = 1e-3,
    x_scale=None,
) -> LsqResult:
    """Minimise ``sum(residual(x)**2)`` subject to ``lower <= x <= upper``.

    Converged means the relative parameter step fell below ``xtol``;
    ``x_scale`` is the floor used in that relative measure for parameters
    that sit near zero.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, np.float64)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, np.float64)
    scale = np.full(n, 1e-12) if x_scale is None else np.asarray(x_scale, np.float64)
    x = np.clip(x, lower, upper)
    r = residual(x)
    cost = float(r @ r)
    costs = [cost]
    lam = lam0
    J = jacobian(x)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d <= 0] = max(float(d.max()) if d.size else 1.0, 1.0) * 1e-12
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_try = np.clip(x + step, lower, upper)
                if _rel_step(x_try, x, scale) < xtol:
                    return LsqResult(x, cost, J, True, it, costs, "relative step below tolerance")
                r_try = residual(x_try)
                c_try = float(r_try @ r_try)
                if np.isfinite(c_try) and c_try < cost:
                    break
            lam *= 10.0
            if lam > LAMBDA_MAX:
                return LsqResult(x, cost, J, False, it, costs, "damping exhausted without a decrease")
        x, r, cost = x_try, r_try, c_try
        costs.append(cost)
        lam = max(lam / 10.0, 1e-15)
        J = jacobian(x)
    return LsqResult(x, cost, J, False, max_iter, costs, "iteration limit reached")
