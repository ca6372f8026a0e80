"""Per-user, per-node and rate subproblems of the relaxed problem.

Given prices (``mu`` per user demand, ``lam`` per user/node content
constraint) the relaxed problem splits into

* a quality pick per user (argmax over the ladder),
* a 0-1 knapsack per edge node (which transcoding jobs to host),
* a linear program over path rates, solvable either centrally or by
  consensus between per-link and radio-access-network agents.

All rates are in Mbps and spectrum in MHz.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .lp import LPError, lp_solve
from .problem import Instance

logger = logging.getLogger(__name__)

KNAPSACK_GRID = 1e-3  # Mbps, i.e. costs quantized to 1 kbps


# ---------------------------------------------------------------- quality

def quality_values(scores, rates, mu: float, top_bonus: float) -> np.ndarray:
    """Priced value of each level: ``s_q - mu v_q``, plus ``top_bonus`` on level Q."""
    vals = np.asarray(scores, dtype=float) - mu * np.asarray(rates, dtype=float)
    vals[-1] += top_bonus
    return vals


def select_quality(scores, rates, mu: float, lam_row=None, full_row=None) -> int:
    """Best 1-based level for one user; ties go to the lower level.

    ``top_bonus`` is ``sum_j lam_row[j] * full_row[j]``, the price credit the
    user collects by asking for the top level (which frees every hitting node
    from transcoding).
    """
    if len(scores) == 0:
        raise ValueError("empty ladder")
    bonus = 0.0
    if lam_row is not None:
        bonus = float(np.dot(lam_row, full_row))
    vals = quality_values(scores, rates, mu, bonus)
    return int(np.argmax(vals)) + 1


# ---------------------------------------------------------------- compute

def assign_compute(gains, costs, capacity: float, hits=None,
                   grid: float = KNAPSACK_GRID) -> np.ndarray:
    """Exact 0-1 knapsack for one node's transcoding budget.

    Only users with positive gain and a cache hit enter the search. Costs
    and capacity are put on an integer grid of ``grid`` units (then divided
    by the common gcd), and a suffix DP picks the optimum; among equal-value
    selections the one that includes lower user indices wins.

    Returns a boolean selection mask over all users.
    """
    gains = np.asarray(gains, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    n = gains.size
    cand = gains > 0
    if hits is not None:
        cand &= np.asarray(hits, dtype=bool)
    items = np.flatnonzero(cand)
    chosen = np.zeros(n, dtype=bool)
    if items.size == 0:
        return chosen

    w = np.rint(costs[items] / grid).astype(np.int64)
    if np.any(w <= 0):
        raise ValueError("costs must be positive on the knapsack grid")
    cap = int(math.floor(capacity / grid + 1e-9))
    g = reduce(math.gcd, w.tolist())
    w //= g
    cap = min(cap // g, int(w.sum()))
    v = gains[items]
    m = items.size

    # best[k, c]: max gain from items k.. with budget c
    best = np.zeros((m + 1, cap + 1))
    for k in range(m - 1, -1, -1):
        row = best[k + 1].copy()
        wk = w[k]
        if wk <= cap:
            take = best[k + 1, : cap + 1 - wk] + v[k]
            row[wk:] = np.maximum(row[wk:], take)
        best[k] = row

    c = cap
    for k in range(m):
        wk = w[k]
        if wk <= c:
            with_k = v[k] + best[k + 1, c - wk]
            if with_k >= best[k, c] - 1e-12 * max(1.0, abs(best[k, c])):
                chosen[items[k]] = True
                c -= wk
    return chosen


# ---------------------------------------------------------------- rates

def rate_constraints(inst: Instance, cols=None):
    """``(A, b)`` for the wired-capacity rows and the shared spectrum row."""
    inc = inst.wired_incidence
    inv_gamma = 1.0 / inst.path_gamma
    if cols is not None:
        inc = inc[:, cols]
        inv_gamma = inv_gamma[cols]
    A = np.vstack([inc, inv_gamma[None, :]])
    b = np.concatenate([inst.wired_cap, [inst.bandwidth]])
    return A, b


def solve_rates_centralized(coeffs, inst: Instance, warm: dict | None = None
                            ) -> tuple[np.ndarray, float]:
    """Maximize ``coeffs @ r`` over wired, spectrum and ``[0, v_Q]`` box limits.

    ``warm`` is an optional scratch dict; the final simplex basis is stored
    there and reused on the next call, since only the objective changes
    between dual iterations.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if inst.n_paths == 0 or not np.any(coeffs > 0):
        # packing constraints: zero is optimal for a non-positive objective
        return np.zeros(inst.n_paths), 0.0
    A, b = rate_constraints(inst)
    res = lp_solve(coeffs, A, b, lo=0.0, hi=inst.top_rate,
                   warm_start=None if warm is None else warm.get("basis"))
    if not res.optimal:
        raise LPError("rate subproblem reported infeasible; zero rates should be feasible")
    if warm is not None:
        warm["basis"] = res.basis
    return res.x, float(coeffs @ res.x)


@dataclass
class ConsensusRates:
    """State of the consensus rate solver.

    ``pair_path``/``pair_link`` list the (path, wired link) pairs that own a
    rate copy; ``wired`` and ``ran`` hold the final local copies and
    ``prices`` the consensus multipliers.
    """

    pair_path: np.ndarray
    pair_link: np.ndarray
    wired: np.ndarray
    ran: np.ndarray
    prices: np.ndarray
    rates: np.ndarray
    objective: float
    dual_bound: float
    iterations: int
    converged: bool

    @property
    def disagreement(self) -> float:
        if self.pair_path.size == 0:
            return 0.0
        return float(np.max(np.abs(self.wired - self.ran[self.pair_path])))


def _fill(coef, weight, budget, cap):
    """Fractional knapsack: maximize coef @ r, weight @ r <= budget, 0 <= r <= cap."""
    out = np.zeros(coef.size)
    pos = np.flatnonzero(coef > 0)
    if pos.size == 0:
        return out
    order = pos[np.argsort(-coef[pos] / weight[pos], kind="stable")]
    used = np.cumsum(weight[order] * cap)
    full = used <= budget
    out[order[full]] = cap
    rest = np.flatnonzero(~full)
    if rest.size:
        k = rest[0]
        prev = used[k - 1] if k > 0 else 0.0
        out[order[k]] = max(0.0, (budget - prev) / weight[order[k]])
    return out


def project_rates(rates, inst: Instance) -> np.ndarray:
    """Scale rates down until every wired link and the spectrum budget hold."""
    r = np.clip(np.asarray(rates, dtype=float), 0.0, inst.top_rate)
    if r.size == 0:
        return r
    load = inst.wired_incidence @ r
    over = load > inst.wired_cap
    link_scale = np.ones_like(load)
    link_scale[over] = inst.wired_cap[over] / load[over]
    factor = np.ones(r.size)
    for row, s in enumerate(link_scale):
        if s < 1.0:
            on = inst.wired_incidence[row] > 0
            factor[on] = np.minimum(factor[on], s)
    r = r * factor
    spectrum = float(np.sum(r / inst.path_gamma))
    if spectrum > inst.bandwidth:
        r *= inst.bandwidth / spectrum
    return r


def solve_rates_distributed(coeffs, inst: Instance, step: float = 1.0,
                            max_iters: int = 5000, rtol: float = 1e-3,
                            check_every: int = 25, warm_prices=None) -> ConsensusRates:
    """Consensus form of the rate LP, solved by per-agent local problems.

    Every wired link keeps its own copy of the rate of each path crossing
    it, and the RAN keeps one more copy per path. The objective is split
    between the copies (half to the RAN, half spread over the path's wired
    links) and equality of the copies is priced. Each iteration every agent
    solves a fractional knapsack against its prices, then the prices move
    along the disagreement with a ``step / sqrt(t)`` schedule.

    Primal estimates are running averages of the agents' copies, projected
    to feasibility; the best projected estimate is kept. Iteration stops
    when the best estimate is within ``rtol`` of the best dual bound.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    P = inst.n_paths
    inc = inst.wired_incidence > 0
    pair_link, pair_path = np.nonzero(inc)
    hops = inc.sum(axis=0)
    w_ran = np.where(hops > 0, 0.5, 1.0)
    w_wired = np.where(hops > 0, 0.5 / np.maximum(hops, 1), 0.0)
    cap = inst.top_rate
    inv_gamma = 1.0 / inst.path_gamma if P else np.zeros(0)
    links = [np.flatnonzero(pair_link == l) for l in range(inst.wired_cap.size)]

    prices = np.zeros(pair_path.size) if warm_prices is None else np.array(warm_prices, float)
    wired = np.zeros(pair_path.size)
    ran = np.zeros(P)
    best_rates = np.zeros(P)
    best_obj = 0.0
    best_dual = np.inf
    avg = np.zeros(P)
    n_avg = 0
    scale = max(float(np.max(np.abs(coeffs))) if P else 0.0, 1e-12) / cap
    converged = False

    t = 0
    for t in range(1, max_iters + 1):
        wc = w_wired[pair_path] * coeffs[pair_path] - prices
        dual = 0.0
        for l, idx in enumerate(links):
            if idx.size:
                wired[idx] = _fill(wc[idx], np.ones(idx.size), inst.wired_cap[l], cap)
                dual += float(wc[idx] @ wired[idx])
        rc = w_ran * coeffs + np.bincount(pair_path, weights=prices, minlength=P)
        ran = _fill(rc, inv_gamma, inst.bandwidth, cap)
        dual += float(rc @ ran)
        best_dual = min(best_dual, dual)

        # per-path estimate: mean of all copies
        est = ran.copy()
        if pair_path.size:
            est = (ran + np.bincount(pair_path, weights=wired, minlength=P)) / (1 + hops)
        if t > max_iters // 10 or t == 1:
            avg += est
            n_avg += 1

        if t == 1 or t % check_every == 0 or t == max_iters:
            for cand in (est, avg / max(n_avg, 1)):
                r = project_rates(np.where(coeffs > 0, cand, 0.0), inst)
                obj = float(coeffs @ r)
                if obj > best_obj:
                    best_obj, best_rates = obj, r
            if best_dual - best_obj <= rtol * max(abs(best_dual), 1e-12):
                converged = True
                break

        tau = step * scale / math.sqrt(t)
        prices -= tau * (ran[pair_path] - wired)

    return ConsensusRates(pair_path, pair_link, wired, ran, prices, best_rates,
                          best_obj, best_dual, t, converged)
