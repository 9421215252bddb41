"""Batch ranking losses over a cross-modal distance matrix.

Every loss returns a LossOutput holding the scalar value together with
its subgradient with respect to the distance inputs; callers chain that
through the distance function into the encoders.  Conventions shared by
all hinges [x]+ = max(x, 0):

  * the subgradient at the kink x = 0 is taken to be 0, so a pair
    sitting exactly on its margin produces no update;
  * in a square batch matrix D, row i / column i are the two sides of
    the i-th ground-truth match, so D[i, i] is the matched-pair
    distance that every margin is measured against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .sinkhorn import TransportPlan, solve_sinkhorn, uniform_problem


@dataclass(frozen=True)
class MarginConfig:
    """All margin and transport hyperparameters in one record.

    eps is the contrastive/triplet margin, m the bidirectional
    max-margin, (p, m1, m2, n) the ordered quadruplet margins, gamma the
    ground-cost sharpness and lam the entropic regularizer.  The
    ordering p < m1 < m2 < n is validated at construction.
    """

    eps: float = 0.2
    m: float = 0.2
    p: float = 0.05
    m1: float = 0.2
    m2: float = 0.5
    n: float = 0.8
    gamma: float = 10.0
    lam: float = 10.0

    def __post_init__(self):
        values = (self.eps, self.m, self.p, self.m1, self.m2, self.n,
                  self.gamma, self.lam)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("margins must be finite")
        if self.eps < 0 or self.m < 0:
            raise ValueError("eps and m must be non-negative")
        if not (self.p < self.m1 < self.m2 < self.n):
            raise ValueError(
                f"margin ordering violated: need p < m1 < m2 < n, got "
                f"p={self.p}, m1={self.m1}, m2={self.m2}, n={self.n}"
            )
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.lam > 0:
            raise ValueError("lam must be positive")


def _coerce_pairs(pairs) -> frozenset:
    if isinstance(pairs, frozenset):
        return pairs
    return frozenset((int(i), int(j)) for i, j in pairs)


@dataclass(frozen=True)
class QuadrupletSets:
    """Index-pair sets S+, S-, S~ over one batch distance matrix."""

    s_plus: frozenset[tuple[int, int]]
    s_minus: frozenset[tuple[int, int]]
    s_partial: frozenset[tuple[int, int]]

    def __post_init__(self):
        # frozensets are taken as-is; other iterables get coerced
        plus = _coerce_pairs(self.s_plus)
        minus = _coerce_pairs(self.s_minus)
        partial = _coerce_pairs(self.s_partial)
        object.__setattr__(self, "s_plus", plus)
        object.__setattr__(self, "s_minus", minus)
        object.__setattr__(self, "s_partial", partial)
        if plus & minus or plus & partial or minus & partial:
            raise ValueError("quadruplet sets must be pairwise disjoint")
        for name, pairs in (("s_minus", minus), ("s_partial", partial)):
            if any(i == j for i, j in pairs):
                raise ValueError(f"matched pairs (i, i) may not appear in {name}")

    def validate_range(self, size: int):
        for pairs in (self.s_plus, self.s_minus, self.s_partial):
            for i, j in pairs:
                if not (0 <= i < size and 0 <= j < size):
                    raise ValueError(
                        f"pair ({i}, {j}) out of range for batch size {size}"
                    )


@dataclass
class LossOutput:
    """Loss value plus subgradient w.r.t. the distance inputs.

    d_grad matches the shape of whatever distances the loss consumed: a
    matrix for batch losses, a length-2 vector (d_pos, d_neg) for the
    triplet, a scalar for the contrastive pair.  plan is filled only by
    the transport-weighted loss so callers can log convergence.
    """

    value: float
    d_grad: np.ndarray
    plan: TransportPlan | None = None


def _check_square(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite distances")
    return D


def contrastive_pair_loss(d: float, y: int, eps: float) -> LossOutput:
    """Siamese pair loss: y*d + (1-y)*[eps - d]+."""
    if d < 0:
        raise ValueError("distances must be non-negative")
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    if y == 1:
        return LossOutput(value=float(d), d_grad=np.float64(1.0))
    value = max(0.0, eps - d)
    grad = -1.0 if d < eps else 0.0
    return LossOutput(value=float(value), d_grad=np.float64(grad))


def triplet_loss(d_pos: float, d_neg: float, eps: float) -> LossOutput:
    """[d_pos - d_neg + eps]+; d_grad holds (d/d_pos, d/d_neg)."""
    if d_pos < 0 or d_neg < 0:
        raise ValueError("distances must be non-negative")
    arg = d_pos - d_neg + eps
    if arg > 0:
        return LossOutput(value=float(arg), d_grad=np.array([1.0, -1.0]))
    return LossOutput(value=0.0, d_grad=np.zeros(2))


def bidirectional_max_margin(D, m: float) -> LossOutput:
    """Sum over i, j != i of [m + d_ii - d_ij]+ + [m + d_ii - d_ji]+.

    Both retrieval directions are penalized: each non-matched column
    entry d_ij and row entry d_ji must clear the matched distance d_ii
    by the margin m.
    """
    D = _check_square(D)
    n = D.shape[0]
    dii = np.diag(D)[:, np.newaxis]
    off = ~np.eye(n, dtype=bool)
    h_cols = (m + dii - D) * off       # anchors vs other columns
    h_rows = (m + dii - D.T) * off     # anchors vs other rows
    value = np.maximum(h_cols, 0.0).sum() + np.maximum(h_rows, 0.0).sum()
    a_cols = (h_cols > 0.0) & off
    a_rows = (h_rows > 0.0) & off
    d_grad = -a_cols.astype(np.float64) - a_rows.T.astype(np.float64)
    np.fill_diagonal(
        d_grad,
        np.diag(d_grad) + a_cols.sum(axis=1) + a_rows.sum(axis=1),
    )
    return LossOutput(value=float(value), d_grad=d_grad)


def _pairs_array(pairs: Iterable[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    ordered = sorted(pairs)
    if not ordered:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    arr = np.asarray(ordered, dtype=int)
    return arr[:, 0], arr[:, 1]


def partial_order_loss(D, sets: QuadrupletSets, cfg: MarginConfig) -> LossOutput:
    """Quadruplet loss with one margin band per relevance level.

    Relative to each anchor's matched distance d_ii, positives are
    hinged within p, negatives beyond n, and partially-relevant pairs
    into the band [d_ii + m1, d_ii + m2]; every term is applied to both
    d_ij and d_ji.
    """
    D = _check_square(D)
    n_items = D.shape[0]
    sets.validate_range(n_items)
    dii = np.diag(D)
    d_grad = np.zeros_like(D)
    value = 0.0

    def hinge(args, plus_idx, minus_idx):
        # accumulate [args]+ and route +1/-1 subgradients
        nonlocal value
        act = args > 0.0
        value += float(args[act].sum())
        pi, pj = plus_idx
        mi, mj = minus_idx
        np.add.at(d_grad, (pi[act], pj[act]), 1.0)
        np.add.at(d_grad, (mi[act], mj[act]), -1.0)

    # positives: [d_ij - d_ii - p]+ and [d_ji - d_ii - p]+
    i, j = _pairs_array(sets.s_plus)
    if i.size:
        hinge(D[i, j] - dii[i] - cfg.p, (i, j), (i, i))
        hinge(D[j, i] - dii[i] - cfg.p, (j, i), (i, i))

    # negatives: [n + d_ii - d_ij]+ and [n + d_ii - d_ji]+
    i, j = _pairs_array(sets.s_minus)
    if i.size:
        hinge(cfg.n + dii[i] - D[i, j], (i, i), (i, j))
        hinge(cfg.n + dii[i] - D[j, i], (i, i), (j, i))

    # partials: pushed beyond m1 but held within m2, both directions
    i, j = _pairs_array(sets.s_partial)
    if i.size:
        hinge(cfg.m1 + dii[i] - D[i, j], (i, i), (i, j))
        hinge(cfg.m1 + dii[i] - D[j, i], (i, i), (j, i))
        hinge(D[i, j] - dii[i] - cfg.m2, (i, j), (i, i))
        hinge(D[j, i] - dii[i] - cfg.m2, (j, i), (i, i))

    return LossOutput(value=value, d_grad=d_grad)


def ot_ground_costs(D, cfg: MarginConfig) -> tuple[np.ndarray, np.ndarray]:
    """Exponentiated hinge penalties G+ and G- feeding the transport plan.

    G+_ij = exp(-gamma * ([d_ij - d_ii - p]+ + [d_ji - d_ii - p]+))
    G-_ij = exp(-gamma * ([n - d_ij + d_ii]+ + [n - d_ji + d_ii]+))

    Entries lie in (0, 1]; a pair already satisfying its margin costs
    exactly 1, and harder pairs decay toward 0, which is what steers
    transport mass onto them.
    """
    D = _check_square(D)
    dii = np.diag(D)[:, np.newaxis]
    plus_viol = np.maximum(D - dii - cfg.p, 0.0) + np.maximum(D.T - dii - cfg.p, 0.0)
    minus_viol = np.maximum(cfg.n - D + dii, 0.0) + np.maximum(cfg.n - D.T + dii, 0.0)
    return np.exp(-cfg.gamma * plus_viol), np.exp(-cfg.gamma * minus_viol)


def ot_weighted_loss(
    D,
    sets: QuadrupletSets,
    cfg: MarginConfig,
    tol: float = 1e-6,
    max_iter: int = 1000,
    plan: TransportPlan | None = None,
) -> LossOutput:
    """Max-margin terms reweighted by an optimal transport plan.

    The plan minimizes <T, C> over uniform marginals, where C carries
    G+ on S+ pairs and G- on S- pairs (zero elsewhere); hard pairs have
    small ground cost and therefore attract mass.  The loss is
    sum T*_ij * L^MM_ij over the masked pairs, with
    L^MM_ij = [m + d_ii - d_ij]+ + [m + d_ii - d_ji]+ and T* treated as
    a constant (no gradient flows through the plan).  A precomputed plan
    may be passed to reuse it across gradient evaluations.
    """
    D = _check_square(D)
    n_items = D.shape[0]
    sets.validate_range(n_items)
    p_mask = np.zeros_like(D, dtype=bool)
    q_mask = np.zeros_like(D, dtype=bool)
    i, j = _pairs_array(sets.s_plus)
    p_mask[i, j] = True
    i, j = _pairs_array(sets.s_minus)
    q_mask[i, j] = True

    if plan is None:
        g_plus, g_minus = ot_ground_costs(D, cfg)
        cost = np.where(p_mask & ~q_mask, g_plus, 0.0) + np.where(
            ~p_mask & q_mask, g_minus, 0.0
        )
        plan = solve_sinkhorn(
            uniform_problem(cost, cfg.lam), tol=tol, max_iter=max_iter
        )

    T = plan.matrix
    dii = np.diag(D)[:, np.newaxis]
    h_cols = cfg.m + dii - D
    h_rows = cfg.m + dii - D.T
    mask = (p_mask & ~q_mask) | (~p_mask & q_mask)
    per_pair = np.maximum(h_cols, 0.0) + np.maximum(h_rows, 0.0)
    value = float((T * per_pair * mask).sum())

    d_grad = np.zeros_like(D)
    a_cols = (h_cols > 0.0) & mask
    a_rows = (h_rows > 0.0) & mask
    d_grad -= np.where(a_cols, T, 0.0)
    d_grad -= np.where(a_rows, T, 0.0).T
    np.fill_diagonal(
        d_grad,
        np.diag(d_grad)
        + np.where(a_cols, T, 0.0).sum(axis=1)
        + np.where(a_rows, T, 0.0).sum(axis=1),
    )
    return LossOutput(value=value, d_grad=d_grad, plan=plan)
