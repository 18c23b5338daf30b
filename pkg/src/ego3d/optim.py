"""Monotone first-order descent with backtracking line search.

The step proposal uses the Barzilai-Borwein ratio from the last accepted
step; acceptance is an Armijo test, so the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteLoss


@dataclass(frozen=True)
class OptConfig:
    max_iterations: int = 500
    tol: float = 1e-10
    initial_step: float = 1e-3
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 50
    max_step: float = 1e3

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    iterations: int
    history: list[float] = field(default_factory=list)
    reason: str = ""


def minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: OptConfig = OptConfig(),
    value_only: Callable[[np.ndarray], float] | None = None,
) -> OptResult:
    """Minimise ``fun(x) -> (value, grad)`` starting from ``x0``.

    ``value_only`` (optional) evaluates the objective without a gradient and
    is used inside the line search.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteLoss(f"objective is not finite at the initial point ({f})")
    evaluate = value_only or (lambda z: fun(z)[0])
    history = [f]
    step = cfg.initial_step
    reason = "max_iterations"
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        gg = float(g.ravel() @ g.ravel())
        if gg == 0.0:
            reason = "zero_gradient"
            break
        for _ in range(cfg.max_backtracks):
            x_new = x - step * g
            f_new = evaluate(x_new)
            if np.isfinite(f_new) and f_new <= f - cfg.armijo * step * gg:
                break
            step *= cfg.shrink
        else:
            reason = "line_search_failed"
            break
        f_new, g_new = fun(x_new)
        s = (x_new - x).ravel()
        y = (g_new - g).ravel()
        rel = (f - f_new) / max(abs(f), 1e-300)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if rel < cfg.tol:
            reason = "tolerance"
            break
        sy = float(s @ y)
        step = min(float(s @ s) / sy, cfg.max_step) if sy > 0 else min(step * 2.0, cfg.max_step)
    return OptResult(x=x, value=f, iterations=it, history=history, reason=reason)
