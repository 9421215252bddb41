"""Entropic-regularized optimal transport via Sinkhorn scaling.

Solves

    min_{T in U(r, c)}  <T, M> - h(T)/lam

where U(r, c) is the set of non-negative matrices with row sums r and
column sums c, and h(T) = -sum T_ij log T_ij.  With K = exp(-lam * M)
the solver alternates the scalings

    u = r ./ (K v),    v = c ./ (K^T u)

and returns the plan diag(u) K diag(v).  Larger lam tracks the exact
(unregularized) transport cost more closely.  A log-domain variant is
available for lam * M values large enough that exp(-lam * M) underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MARGINAL_TOL = 1e-12


class SinkhornUnderflowError(ValueError):
    """exp(-lam*M) underflowed to an all-zero row or column.

    Decrease lam or call solve_sinkhorn(..., log_domain=True).
    """


@dataclass(frozen=True)
class TransportProblem:
    """Square cost matrix plus row/column marginals and the regularizer."""

    cost: np.ndarray
    r: np.ndarray
    c: np.ndarray
    lam: float

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)
        if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
            raise ValueError("cost must be a square matrix")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("cost entries must be finite and non-negative")
        n = cost.shape[0]
        for name, vec in (("r", r), ("c", c)):
            if vec.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            if np.any(vec <= 0):
                raise ValueError(f"{name} entries must be positive")
            if abs(vec.sum() - 1.0) > _MARGINAL_TOL:
                raise ValueError(f"{name} must sum to 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def size(self) -> int:
        return self.cost.shape[0]


@dataclass
class TransportPlan:
    matrix: np.ndarray
    iterations_used: int
    converged: bool


def uniform_problem(cost, lam: float) -> TransportProblem:
    """Transport problem with uniform marginals 1/n on both sides."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    marg = np.full(n, 1.0 / n)
    return TransportProblem(cost=cost, r=marg, c=marg, lam=lam)


def solve_sinkhorn(
    problem: TransportProblem,
    tol: float = 1e-6,
    max_iter: int = 1000,
    log_domain: bool = False,
) -> TransportPlan:
    """Alternate row/column rescalings until the marginals fit.

    Convergence is the L-infinity violation of both marginals, checked
    every iteration.  A non-converged run returns the best-effort plan
    with converged=False rather than raising, so a training step can log
    it and move on.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if log_domain:
        return _solve_log_domain(problem, tol, max_iter)

    K = np.exp(-problem.lam * problem.cost)
    if np.any(K.sum(axis=1) == 0.0) or np.any(K.sum(axis=0) == 0.0):
        raise SinkhornUnderflowError(
            "exp(-lam*cost) underflowed to an empty row or column; "
            "use a smaller lam or log_domain=True"
        )
    r, c = problem.r, problem.c
    n = problem.size
    u = np.ones(n)
    v = np.ones(n)
    plan = None
    for it in range(1, max_iter + 1):
        u = r / (K @ v)
        v = c / (K.T @ u)
        plan = u[:, np.newaxis] * K * v[np.newaxis, :]
        err = max(
            np.max(np.abs(plan.sum(axis=1) - r)),
            np.max(np.abs(plan.sum(axis=0) - c)),
        )
        if not np.isfinite(err):
            raise SinkhornUnderflowError(
                "scaling vectors overflowed; use a smaller lam or "
                "log_domain=True"
            )
        if err <= tol:
            return TransportPlan(matrix=plan, iterations_used=it, converged=True)
    return TransportPlan(matrix=plan, iterations_used=max_iter, converged=False)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def _solve_log_domain(
    problem: TransportProblem, tol: float, max_iter: int
) -> TransportPlan:
    logK = -problem.lam * problem.cost
    log_r = np.log(problem.r)
    log_c = np.log(problem.c)
    alpha = np.zeros(problem.size)   # log u
    beta = np.zeros(problem.size)    # log v
    plan = None
    for it in range(1, max_iter + 1):
        alpha = log_r - _logsumexp(logK + beta[np.newaxis, :], axis=1)
        beta = log_c - _logsumexp(logK + alpha[:, np.newaxis], axis=0)
        plan = np.exp(alpha[:, np.newaxis] + logK + beta[np.newaxis, :])
        err = max(
            np.max(np.abs(plan.sum(axis=1) - problem.r)),
            np.max(np.abs(plan.sum(axis=0) - problem.c)),
        )
        if err <= tol:
            return TransportPlan(matrix=plan, iterations_used=it, converged=True)
    return TransportPlan(matrix=plan, iterations_used=max_iter, converged=False)


def _plan_matrix(plan) -> np.ndarray:
    matrix = plan.matrix if isinstance(plan, TransportPlan) else plan
    return np.asarray(matrix, dtype=np.float64)


def plan_entropy(plan) -> float:
    """h(T) = -sum T_ij log T_ij, with 0 log 0 taken as 0."""
    T = _plan_matrix(plan)
    if np.any(T < 0):
        raise ValueError("plan entries must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(T > 0.0, T * np.log(T), 0.0)
    return float(-terms.sum())


def transport_cost(plan, cost) -> float:
    """Frobenius inner product <T, M>."""
    T = _plan_matrix(plan)
    M = np.asarray(cost, dtype=np.float64)
    if T.shape != M.shape:
        raise ValueError(f"shape mismatch: plan {T.shape} vs cost {M.shape}")
    return float((T * M).sum())
