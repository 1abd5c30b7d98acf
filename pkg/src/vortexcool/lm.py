"""Small Levenberg-Marquardt solver for dense, low-dimensional problems.

Marquardt's variant: the damping term is scaled by diag(J^T J), which
makes the step invariant to per-parameter rescaling. The Jacobian is
taken by central differences unless the caller supplies one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class SingularSystemError(np.linalg.LinAlgError):
    """J^T J is rank deficient at the starting point."""


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * sum(r^2)
    residuals: np.ndarray
    iterations: int
    converged: bool
    message: str
    cost_history: list = field(default_factory=list)  # cost after each accepted step, starting point first


def fd_jacobian(fun, x, r0=None, step=1e-6):
    """Central-difference Jacobian with a step relative to ``max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iterations: int = 200,
    xtol: float = 1e-8,
    ftol: float = 1e-10,
    damping: float = 1e-3,
    fd_step: float = 1e-6,
    check_rank: bool = True,
) -> LMResult:
    """Minimise ``0.5 * ||fun(x)||^2``.

    Converges when an accepted step changes every coordinate by less than
    ``xtol`` (relative, with a floor of 1) or lowers the cost by less than
    ``ftol`` relative. Rejected steps, including ones producing non-finite
    residuals, only raise the damping. If the damping grows past 1e16 no
    descent direction is left at working precision and the current point
    is returned as converged.

    Raises SingularSystemError if ``check_rank`` and the Jacobian at ``x0``
    does not have full column rank.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    x = np.array(x0, dtype=float)
    if jac is None:
        jac = lambda z: fd_jacobian(fun, z, step=fd_step)  # noqa: E731

    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals are not finite at the starting point")
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = float(damping)

    J = jac(x)
    if check_rank:
        # column-normalised so badly scaled but independent columns pass
        norms = np.linalg.norm(J, axis=0)
        if np.any(norms == 0) or np.linalg.matrix_rank(J / norms) < x.size:
            raise SingularSystemError("Jacobian is rank deficient: data do not determine all free parameters")

    for it in range(1, max_iterations + 1):
        if cost == 0.0:
            return LMResult(x, cost, r, it - 1, True, "exact fit", history)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                delta = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                x_new = x + delta
                r_new = np.asarray(fun(x_new), dtype=float)
                if np.all(np.isfinite(r_new)):
                    cost_new = 0.5 * float(r_new @ r_new)
                    if cost_new <= cost:
                        break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(x, cost, r, it, True, "no further decrease at working precision", history)

        decrease = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        small_step = np.all(np.abs(delta) <= xtol * np.maximum(np.abs(x), 1.0))
        small_decrease = decrease <= ftol * history[-2]
        if small_step or small_decrease or cost == 0.0:
            return LMResult(x, cost, r, it, True, "step below tolerance" if small_step else "cost decrease below tolerance", history)
        J = jac(x)

    return LMResult(x, cost, r, max_iterations, False, "maximum iterations reached", history)
