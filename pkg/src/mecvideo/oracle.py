"""Exhaustive solver and independent feasibility checker for small instances."""

from __future__ import annotations

import itertools
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .lp import lp_solve
from .problem import Instance, PrimalSolution, bound_violations, validate_instance

RTOL = 1e-9
CONSTRAINTS = ("domain", "one_level", "compute", "wired", "spectrum", "demand", "content")


class OracleSizeError(ValueError):
    """Instance too large to enumerate."""


def _close_le(lhs: float, rhs: float, rtol: float = RTOL) -> bool:
    return lhs <= rhs + rtol * max(1.0, abs(rhs))


def check_feasible(solution: PrimalSolution, inst: Instance, rtol: float = RTOL) -> dict:
    """Re-evaluate every constraint family of the joint problem.

    Returns ``{family: passed}`` for ``domain`` (binary choices, non-negative
    rates), ``one_level``, ``compute``, ``wired``, ``spectrum``, ``demand``
    and ``content``. Written with plain loops over the raw instance data so
    it shares nothing with the solvers.
    """
    I, J, Q = inst.n_users, inst.n_nodes, inst.Q
    levels = [int(q) for q in np.asarray(solution.levels).ravel()]
    y = np.asarray(solution.y)
    r = [float(v) for v in np.asarray(solution.rates).ravel()]
    out = dict.fromkeys(CONSTRAINTS, True)

    if len(levels) != I or y.shape != (I, J) or len(r) != inst.n_paths:
        return dict.fromkeys(CONSTRAINTS, False)

    # domain
    for v in r:
        if not v >= -rtol:
            out["domain"] = False
    for i in range(I):
        for j in range(J):
            if y[i, j] not in (0, 1, True, False):
                out["domain"] = False

    # exactly one level per user
    for q in levels:
        if not 1 <= q <= Q:
            out["one_level"] = False

    # compute budgets; a miss can never host a job
    for j in range(J):
        if j == inst.origin:
            continue
        used = 0.0
        for i in range(I):
            if y[i, j]:
                if not inst.hit[i, j]:
                    out["compute"] = False
                used += float(inst.task_cost[i])
        if not _close_le(used, float(inst.compute_capacity[j]), rtol):
            out["compute"] = False

    # wired links, walked from the path link lists where available
    row_of = {lid: k for k, lid in enumerate(inst.wired_link_ids)}
    load = [0.0] * inst.wired_cap.size
    for p in range(inst.n_paths):
        if inst.paths and row_of:
            rows = [row_of[l] for l in inst.paths[p].link_sequence if l in row_of]
        else:
            rows = [k for k in range(inst.wired_cap.size) if inst.wired_incidence[k, p]]
        for k in rows:
            load[k] += r[p]
    for k, cap in enumerate(inst.wired_cap):
        if not _close_le(load[k], float(cap), rtol):
            out["wired"] = False

    # shared spectrum
    spectrum = sum(r[p] / float(inst.path_gamma[p]) for p in range(inst.n_paths))
    if not _close_le(spectrum, float(inst.bandwidth), rtol):
        out["spectrum"] = False

    # demand equality and the per-source content rule
    got = [0.0] * I
    sourced = {}
    for p in range(inst.n_paths):
        i, j = int(inst.path_user[p]), int(inst.path_source[p])
        got[i] += r[p]
        sourced[i, j] = sourced.get((i, j), 0.0) + r[p]
    for i in range(I):
        q = levels[i]
        if not 1 <= q <= Q:
            out["demand"] = False
            continue
        need = float(inst.rates[q - 1])
        if abs(got[i] - need) > rtol * max(1.0, need):
            out["demand"] = False
    top = float(inst.rates[-1])
    for (i, j), amount in sourced.items():
        hit = bool(inst.hit[i, j])
        transcode = 1 if j == inst.origin else int(bool(y[i, j]))
        allow = (top if hit else 0.0) * ((1 if levels[i] == Q else 0) + transcode)
        if not _close_le(amount, allow, rtol):
            out["content"] = False
    return out


def _max_delivery(inst: Instance, levels: tuple, y: np.ndarray):
    """LP: most total rate with demand caps; returns (rates, all demands met)."""
    Q = inst.Q
    demand = np.array([inst.rates[q - 1] for q in levels])
    cols = []
    for p in range(inst.n_paths):
        i, j = inst.path_user[p], inst.path_source[p]
        if j == inst.origin or levels[i] == Q or y[i, j]:
            cols.append(p)
    rates = np.zeros(inst.n_paths)
    if not cols:
        return rates, False
    cols = np.array(cols)
    A = [inst.wired_incidence[:, cols], (1.0 / inst.path_gamma[cols])[None, :]]
    b = [inst.wired_cap, [inst.bandwidth]]
    U = np.zeros((inst.n_users, cols.size))
    U[inst.path_user[cols], np.arange(cols.size)] = 1.0
    A.append(U)
    b.append(demand)
    res = lp_solve(np.ones(cols.size), np.vstack(A), np.concatenate(b), lo=0.0, hi=inst.top_rate)
    rates[cols] = res.x
    met = res.value >= demand.sum() * (1.0 - RTOL)
    return rates, met


def _maximal_packings(users: list[int], cost: np.ndarray, capacity: float) -> list[tuple]:
    """Subset-maximal sets of ``users`` whose total cost fits ``capacity``."""
    fits = []
    for k in range(len(users), -1, -1):
        for combo in itertools.combinations(users, k):
            if cost[list(combo)].sum() <= capacity + 1e-12:
                fits.append(frozenset(combo))
    maximal = [s for s in fits if not any(s < t for t in fits)]
    return sorted((tuple(sorted(s)) for s in maximal), key=lambda s: (-len(s), s))


def solve_exact(inst: Instance) -> PrimalSolution | None:
    """Optimal schedule by enumeration, or ``None`` when nothing is feasible.

    Level vectors are visited in decreasing mean score (ties: smallest
    vector first). For each, only subset-maximal compute assignments for
    the users below the top level are tried: adding a job never shrinks the
    set of usable paths, so a level vector is feasible iff one of those
    maximal assignments is. Each candidate is checked with a rate LP.
    """
    validate_instance(inst)
    problems = bound_violations(inst)
    if problems:
        raise OracleSizeError("instance too large to enumerate: " + "; ".join(problems))
    I, J, Q = inst.n_users, inst.n_nodes, inst.Q
    candidates = sorted(itertools.product(range(1, Q + 1), repeat=I),
                        key=lambda X: (-sum(inst.scores[q - 1] for q in X), X))
    pairs = inst.relaxed_pairs
    for X in candidates:
        low = [i for i in range(I) if X[i] < Q]
        per_node = []
        nodes = [j for j in range(J) if j != inst.origin]
        for j in nodes:
            eligible = [i for i in low if pairs[i, j]]
            per_node.append(_maximal_packings(eligible, inst.task_cost, inst.compute_capacity[j]))
        for choice in itertools.product(*per_node):
            y = np.zeros((I, J), dtype=bool)
            for j, members in zip(nodes, choice):
                for i in members:
                    y[i, j] = True
            rates, met = _max_delivery(inst, X, y)
            if met:
                levels = np.array(X, dtype=int)
                return PrimalSolution(levels, y, rates, float(np.mean(inst.scores[levels - 1])))
    return None


class ExactSolver(BaseEstimator):
    """Enumeration-based solver with the same estimator surface as the dual solver.

    Attributes
    ----------
    solution_ : PrimalSolution or None
    utility_ : float
        Optimal mean score, ``-inf`` when infeasible.
    levels_ : ndarray or None
    """

    def fit(self, instance: Instance, y=None):
        self.solution_ = solve_exact(instance)
        self.utility_ = self.solution_.utility if self.solution_ is not None else -math.inf
        self.levels_ = None if self.solution_ is None else self.solution_.levels.copy()
        return self

    def fit_predict(self, instance: Instance, y=None):
        return self.fit(instance).levels_

    def score(self, instance: Instance | None = None, y=None) -> float:
        check_is_fitted(self, "utility_")
        return self.utility_
