"""Batched Levenberg-Marquardt for small dense least-squares problems.

Many independent 6-parameter problems (robust-estimation hypotheses) are
advanced in lock-step: each iteration proposes one damped step per active
problem, accepts or rejects it, and freezes problems that meet a
termination test.  Accepted costs are non-increasing by construction.

Damping schedule: ``mu`` starts at ``1e-3 * max diag(J^T J)``, doubles on a
rejected step and shrinks by 1/3 on an accepted one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LMReport", "lm_minimize"]

_MU_INIT = 1e-3
_MU_UP = 2.0
_MU_DOWN = 1.0 / 3.0
_MU_MAX_FACTOR = 1e16


@dataclass
class LMReport:
    """Per-problem convergence report."""

    converged: np.ndarray  # (B,) bool
    status: list  # short reason strings
    iterations: np.ndarray  # proposals evaluated
    cost: np.ndarray  # final cost
    grad_norm: np.ndarray  # final |J^T r|
    cost_history: list  # accepted costs of problem 0 (diagnostic)


def lm_minimize(
    problem,
    x0: np.ndarray,
    max_iterations: int = 100,
    grad_tol: float = 1e-10,
    step_tol: float = 1e-12,
) -> tuple[np.ndarray, LMReport]:
    """Minimize ``sum(r^2)`` for a batch of problems.

    Args:
        problem: object with ``evaluate(x, jac=..., subset=...) -> (r, J)``
            over batched states ``(B, n)``.
        x0: initial states, ``(B, n)`` or ``(n,)``.

    Returns:
        ``(x, report)``; non-convergence is reported in ``report.status``
        per problem, never silently dropped.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    B, n = x.shape

    r, J = problem.evaluate(x, jac=True)
    cost = np.einsum("br,br->b", r, r)
    g = np.einsum("brn,br->bn", J, r)
    H = np.einsum("brn,brm->bnm", J, J)

    diag_max = np.maximum(H[:, np.arange(n), np.arange(n)].max(axis=1), 1e-30)
    mu = _MU_INIT * diag_max
    mu_cap = _MU_MAX_FACTOR * np.maximum(diag_max, 1.0)

    # Status codes: 0 = running (max-iterations if never resolved),
    # 1 = gradient, 2 = step, 3 = damping-cap.
    active = np.ones(B, dtype=bool)
    scode = np.zeros(B, dtype=np.int8)
    iterations = np.zeros(B, dtype=int)
    gnorm = np.linalg.norm(g, axis=1)
    history = [float(cost[0])]

    done = gnorm < grad_tol
    scode[done] = 1
    active &= ~done

    eye = np.eye(n)
    it = 0
    while active.any() and it < max_iterations:
        it += 1
        idx = np.nonzero(active)[0]
        A = H[idx] + mu[idx, None, None] * eye
        try:
            step = -np.linalg.solve(A, g[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            # H + mu I singular can only happen for a numerically zero H.
            mu[idx] *= _MU_UP
            continue

        x_try = x[idx] + step
        iterations[idx] += 1

        # Only the still-active problems are evaluated.
        r_try, J_try = problem.evaluate(x_try, jac=True, subset=idx)
        cost_try = np.einsum("br,br->b", r_try, r_try)

        accept = cost_try <= cost[idx]
        acc = idx[accept]
        rej = idx[~accept]
        small_step = np.linalg.norm(step, axis=1) < step_tol

        if acc.size:
            x[acc] = x_try[accept]
            r[acc] = r_try[accept]
            J[acc] = J_try[accept]
            cost[acc] = cost_try[accept]
            g[acc] = np.einsum("brn,br->bn", J_try[accept], r_try[accept])
            H[acc] = np.einsum("brn,brm->bnm", J_try[accept], J_try[accept])
            mu[acc] *= _MU_DOWN
            gnorm[acc] = np.linalg.norm(g[acc], axis=1)
            grad_ok = gnorm[acc] < grad_tol
            step_ok = small_step[accept] & ~grad_ok
            scode[acc[grad_ok]] = 1
            scode[acc[step_ok]] = 2
            active[acc[grad_ok | step_ok]] = False
        if rej.size:
            mu[rej] *= _MU_UP
            # A rejected step this small cannot improve anything anymore.
            tiny = small_step[~accept]
            capped = (mu[rej] > mu_cap[rej]) & ~tiny
            scode[rej[tiny]] = 2
            scode[rej[capped]] = 3
            active[rej[tiny | capped]] = False
        if acc.size and acc[0] == 0:
            history.append(float(cost[0]))

    names = {0: "max-iterations", 1: "gradient", 2: "step", 3: "damping-cap"}
    converged = (scode == 1) | (scode == 2)
    return x, LMReport(
        converged=converged,
        status=[names[int(c)] for c in scode],
        iterations=iterations,
        cost=cost,
        grad_norm=gnorm,
        cost_history=history,
    )
