"""Dense two-phase simplex for small inequality-form linear programs.

Solves ``min/max c.z  s.t.  A z <= b`` with free variables, by splitting
``z = p - q`` (``p, q >= 0``), adding one slack per row and one artificial
per row for phase 1.  Pivot columns follow Dantzig's rule until progress
stalls, then switch to Bland's rule, which rules out cycling; the pivot
sequence is deterministic either way, so reported optimizers are
reproducible.

Intended scale is tens of variables and a few hundred rows; everything is
kept as a dense numpy tableau with vectorized pivots.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
_BLAND_AFTER = 60  # pivots without objective progress before anti-cycling kicks in


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class Sense(enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class LpResult:
    """Outcome of an LP solve.

    ``value`` and ``point`` are only meaningful when ``status`` is OPTIMAL;
    they are ``nan`` / empty otherwise.
    """

    status: LpStatus
    value: float
    point: np.ndarray

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _pivot(T, basis, row, col):
    T[row] = T[row] / T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _run_simplex(T, basis, cost, n_cols, max_iter):
    """Iterate to optimality; returns "optimal" or "unbounded".

    ``cost`` is the reduced-cost row (entry -1 tracks minus the objective),
    updated in place alongside the tableau.
    """
    stall = 0
    last_obj = cost[-1]
    for _ in range(max_iter):
        negative = cost[:n_cols] < -OPT_TOL
        if not negative.any():
            return "optimal"
        if stall < _BLAND_AFTER:
            enter = int(np.argmin(cost[:n_cols]))
        else:  # Bland: lowest eligible index
            enter = int(np.nonzero(negative)[0][0])
        col = T[:, enter]
        positive = col > FEAS_TOL
        if not positive.any():
            return "unbounded"
        ratios = np.full(col.shape, np.inf)
        ratios[positive] = T[positive, -1] / col[positive]
        best = ratios.min()
        tied = np.nonzero(ratios <= best + FEAS_TOL)[0]
        if tied.size == 1:
            leave = int(tied[0])
        else:  # break ties on the smallest basic-variable index (Bland)
            basis_arr = np.asarray(basis)
            leave = int(tied[np.argmin(basis_arr[tied])])
        cost -= (cost[enter] / T[leave, enter]) * T[leave]
        _pivot(T, basis, leave, enter)
        if cost[-1] > last_obj + OPT_TOL or cost[-1] < last_obj - OPT_TOL:
            stall = 0
            last_obj = cost[-1]
        else:
            stall += 1
    raise NumericalError("simplex exceeded iteration limit")


def solve_lp(c, a_ub, b_ub, sense: Sense = Sense.MIN) -> LpResult:
    """Solve ``min`` (or ``max``) ``c.z`` over ``{z : a_ub z <= b_ub}``.

    Free variables; no implicit bounds.  Infeasibility and unboundedness
    are reported through the result status, never raised.
    """
    c = np.asarray(c, dtype=float).ravel()
    a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float).ravel()
    n = c.size
    if a_ub.size == 0:
        a_ub = a_ub.reshape(0, n)
    m = a_ub.shape[0]
    if a_ub.shape[1] != n or b_ub.size != m:
        raise ValueError("inconsistent LP dimensions")
    if not (np.all(np.isfinite(a_ub)) and np.all(np.isfinite(b_ub)) and np.all(np.isfinite(c))):
        raise ValueError("LP data must be finite")

    obj = c if sense is Sense.MIN else -c
    if m == 0:
        # unconstrained: optimal iff the objective is identically zero
        if np.all(np.abs(obj) <= OPT_TOL):
            return LpResult(LpStatus.OPTIMAL, 0.0, np.zeros(n))
        return LpResult(LpStatus.UNBOUNDED, np.nan, np.empty(0))

    # standard form columns: [p (n), q (n), slack (m), artificial (m)]
    n_struct = 2 * n + m
    n_total = n_struct + m
    T = np.zeros((m, n_total + 1))
    T[:, :n] = a_ub
    T[:, n : 2 * n] = -a_ub
    T[:, 2 * n : 2 * n + m] = np.eye(m)
    T[:, -1] = b_ub
    neg = T[:, -1] < 0.0
    T[neg] *= -1.0
    T[:, n_struct:n_total] = np.eye(m)
    basis = [n_struct + r for r in range(m)]

    max_iter = 5000 + 50 * (m + n_total)

    # phase 1: minimize the sum of artificials
    cost1 = np.zeros(n_total + 1)
    cost1[n_struct:n_total] = 1.0
    cost1 -= T.sum(axis=0)
    state = _run_simplex(T, basis, cost1, n_total, max_iter)
    if state == "unbounded":  # pragma: no cover - phase 1 is always bounded
        raise NumericalError("phase-1 simplex reported unbounded")
    if -cost1[-1] > 1e-7:
        return LpResult(LpStatus.INFEASIBLE, np.nan, np.empty(0))
    # drive leftover artificials out of the basis
    for r in range(m):
        if basis[r] >= n_struct:
            structural = np.nonzero(np.abs(T[r, :n_struct]) > FEAS_TOL)[0]
            if structural.size:
                _pivot(T, basis, r, int(structural[0]))
            # else: redundant row, harmless to leave a zero-level artificial

    # phase 2 on the structural columns only (artificials are never
    # entering candidates because the scan stops at n_struct)
    cost2 = np.zeros(n_total + 1)
    cost2[:n] = obj
    cost2[n : 2 * n] = -obj
    red = cost2.copy()
    basic_costs = cost2[np.asarray(basis)]
    nz = np.nonzero(basic_costs != 0.0)[0]
    for r in nz:
        red -= basic_costs[r] * T[r]
    state = _run_simplex(T, basis, red, n_struct, max_iter)
    if state == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, np.nan, np.empty(0))

    x = np.zeros(n_total)
    for r in range(m):
        if basis[r] < n_total:
            x[basis[r]] = T[r, -1]
    z = x[:n] - x[n : 2 * n]
    value = float(c @ z)
    return LpResult(LpStatus.OPTIMAL, value, z)
