"""Dense bounded-variable primal simplex.

Small LPs of the form::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                lo <= x <= hi          (finite bounds)

are solved with a two-phase revised simplex that keeps nonbasic variables
at either bound and uses Bland's smallest-index rule for both the entering
and the leaving variable, so it cannot cycle. The problems this package
builds have a few dozen rows at most, so the basis is refactored from
scratch every pivot instead of being updated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class LPError(RuntimeError):
    """Numerical failure: iteration cap hit or an unbounded ray found."""


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    value: float | None
    iterations: int = 0
    basis: tuple | None = None  # (basic columns, at-upper flags) for warm starts

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def lp_solve(c, A_ub=None, b_ub=None, bounds=None, *, lo=None, hi=None,
             max_iter: int | None = None, tol: float = 1e-9, warm_start=None) -> LPResult:
    """Maximize ``c @ x`` over ``A_ub @ x <= b_ub`` and the variable box.

    Parameters
    ----------
    c : array_like, shape (n,)
    A_ub : array_like, shape (m, n), optional
    b_ub : array_like, shape (m,), optional
    bounds : sequence of n (lo, hi) pairs, optional
    lo, hi : scalar or array_like, optional
        Alternative to ``bounds``; default box is ``[0, 1]``. All bounds must
        be finite.
    max_iter : int, optional
        Pivot cap across both phases; exceeding it raises :class:`LPError`.
    warm_start : tuple, optional
        ``basis`` of an earlier result on the same constraints. Used only when
        no artificial columns are needed and the basis is still primal
        feasible; otherwise ignored.

    Returns
    -------
    LPResult
        ``status`` is ``"optimal"`` or ``"infeasible"``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    lo, hi = _parse_bounds(bounds, lo, hi, n)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("all variable bounds must be finite")
    if A_ub is None or np.size(A_ub) == 0:
        A = np.zeros((0, n))
        b = np.zeros(0)
    else:
        A = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b = np.asarray(b_ub, dtype=float).ravel()
        if A.shape != (b.size, n):
            raise ValueError("A_ub / b_ub shapes do not match c")
    if np.any(hi < lo - tol):
        return LPResult(INFEASIBLE, None, None)
    hi = np.maximum(hi, lo)
    m = b.size
    upper = hi - lo
    rhs = b - A @ lo

    if m == 0:
        x = np.where(c > 0, hi, lo)
        return LPResult(OPTIMAL, x, float(c @ x))

    max_iter = max_iter if max_iter is not None else 50 * (n + m) + 1000
    scale = max(1.0, float(np.max(np.abs(rhs))))

    # columns: structural | slack | artificial (one per negative-rhs row)
    neg = np.flatnonzero(rhs < 0)
    k = neg.size
    M = np.zeros((m, n + m + k))
    M[:, :n] = A
    M[:, n:n + m] = np.eye(m)
    beta = rhs.copy()
    M[neg] *= -1.0
    beta[neg] *= -1.0
    M[neg, n + m + np.arange(k)] = 1.0
    ub = np.concatenate([upper, np.full(m, np.inf), np.full(k, np.inf)])

    basis = np.arange(n, n + m)
    basis[neg] = n + m + np.arange(k)
    at_upper = np.zeros(n + m + k, dtype=bool)
    if warm_start is not None and k == 0:
        wb, wu = warm_start
        wb = np.asarray(wb)
        wu = np.asarray(wu, dtype=bool)
        if wb.shape == (m,) and wu.shape == (n + m,) and _usable(M, beta, ub, wb, wu, tol):
            basis, at_upper = wb.copy(), wu.copy()

    iters = 0
    if k:
        cost1 = np.zeros(n + m + k)
        cost1[n + m:] = -1.0
        basis, at_upper, iters = _simplex(M, beta, ub, cost1, basis, at_upper,
                                          max_iter, tol, iters)
        x = _primal(M, beta, ub, basis, at_upper)
        if np.sum(x[n + m:]) > tol * scale * max(1, k):
            return LPResult(INFEASIBLE, None, None, iters)
        ub[n + m:] = 0.0
        at_upper[n + m:] = False

    cost2 = np.concatenate([c, np.zeros(m + k)])
    basis, at_upper, iters = _simplex(M, beta, ub, cost2, basis, at_upper,
                                      max_iter, tol, iters)
    full = _primal(M, beta, ub, basis, at_upper)
    xs = np.clip(full[:n], 0.0, upper)
    x = lo + xs
    return LPResult(OPTIMAL, x, float(c @ x), iters, (basis, at_upper))


def _usable(M, beta, ub, basis, at_upper, tol):
    if len(set(basis.tolist())) != basis.size or np.any(at_upper[basis]):
        return False
    B = M[:, basis]
    if np.linalg.cond(B) > 1e10:
        return False
    x = _primal(M, beta, ub, basis, at_upper)
    xb = x[basis]
    return bool(np.all(xb >= -tol) and np.all(xb <= ub[basis] + tol))


def _parse_bounds(bounds, lo, hi, n):
    if bounds is not None:
        arr = np.asarray(bounds, dtype=float)
        if arr.shape != (n, 2):
            raise ValueError("bounds must hold one (lo, hi) pair per variable")
        return arr[:, 0].copy(), arr[:, 1].copy()
    lo = np.broadcast_to(np.asarray(0.0 if lo is None else lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(1.0 if hi is None else hi, dtype=float), (n,)).copy()
    return lo, hi


def _primal(M, beta, ub, basis, at_upper):
    x = np.where(at_upper, ub, 0.0)
    x[basis] = 0.0
    B = M[:, basis]
    x[basis] = np.linalg.solve(B, beta - M @ x)
    return x


def _simplex(M, beta, ub, cost, basis, at_upper, max_iter, tol, iters):
    m, ncol = M.shape
    basis = basis.copy()
    at_upper = at_upper.copy()
    is_basic = np.zeros(ncol, dtype=bool)
    is_basic[basis] = True
    fixed = ub <= 0.0
    while True:
        if iters >= max_iter:
            raise LPError(f"simplex iteration cap ({max_iter}) exceeded")
        iters += 1
        Binv = np.linalg.inv(M[:, basis])
        xN = np.where(at_upper & ~is_basic, ub, 0.0)
        xB = Binv @ (beta - M @ xN)
        y = cost[basis] @ Binv
        d = cost - y @ M

        cand = ~is_basic & ~fixed & np.where(at_upper, d < -tol, d > tol)
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return basis, at_upper, iters
        j = int(idx[0])
        direction = -1.0 if at_upper[j] else 1.0
        delta = -direction * (Binv @ M[:, j])  # d xB / dt

        ubB = ub[basis]
        t = np.full(m, np.inf)
        down = delta < -tol
        up = (delta > tol) & np.isfinite(ubB)
        t[down] = np.maximum(xB[down], 0.0) / -delta[down]
        t[up] = np.maximum(ubB[up] - xB[up], 0.0) / delta[up]
        t_row = t.min() if m else np.inf
        if not np.isfinite(min(t_row, ub[j])):
            raise LPError("unbounded direction; variable boxes are required")
        if ub[j] <= t_row + tol:
            at_upper[j] = not at_upper[j]
            continue
        # Bland: among (near-)tied rows the smallest variable index leaves
        ties = np.flatnonzero(t <= t_row + tol)
        leave = int(ties[np.argmin(basis[ties])])
        out = basis[leave]
        basis[leave] = j
        is_basic[out] = False
        is_basic[j] = True
        at_upper[j] = False
        at_upper[out] = bool(up[leave])
