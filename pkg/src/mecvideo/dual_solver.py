"""Subgradient loop over the prices of the coupling constraints.

Two families of constraints tie the variables together: the per-user
demand equality (delivered rate equals the chosen bitrate, price ``mu``)
and the per-(user, node) content rule (a node may only serve a flow it
caches and either transcodes or ships at top quality, price ``lam``).
With both priced out, the problem falls apart into the subproblems in
:mod:`mecvideo.subproblems`; their optimal values sum to an upper bound
on the best achievable mean score. Each iteration also turns the
subproblem answers into a feasible schedule, so the loop reports a bound
and an incumbent side by side.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .lp import lp_solve
from .problem import MBPS, Instance, PrimalSolution, validate_instance
from .subproblems import (
    ConsensusRates,
    assign_compute,
    quality_values,
    select_quality,
    solve_rates_centralized,
    solve_rates_distributed,
)

logger = logging.getLogger(__name__)

MODES = ("centralized", "distributed")
TRACE_COLUMNS = ("iteration", "dual", "best_dual", "best_primal", "gap", "z_mu_norm", "z_lambda_norm")


@dataclass
class DualState:
    mu: np.ndarray  # (I,) free sign
    lam: np.ndarray  # (I, J) >= 0, zero off the relaxed pairs
    t: int = 0
    step_a: float = 10.0
    step_b: float = 10.0
    consensus_prices: np.ndarray | None = None

    @classmethod
    def initial(cls, inst: Instance, step_a: float = 10.0, step_b: float = 10.0) -> "DualState":
        return cls(np.zeros(inst.n_users), np.zeros((inst.n_users, inst.n_nodes)), 0,
                   step_a, step_b)

    def step(self, inst: Instance) -> float:
        """Diminishing step ``a / (b + t)`` normalized to price units.

        Subgradients are in Mbps and prices in score per Mbps, so the raw step
        is scaled by ``s_Q / (|I| v_Q^2)``: a unit step then moves a price by
        about the per-user score spread over the top bitrate.
        """
        unit = inst.scores[-1] / (inst.n_users * inst.top_rate ** 2)
        return self.step_a / (self.step_b + self.t) * unit


@dataclass
class SubproblemSolutions:
    levels: np.ndarray  # (I,) 1-based
    y: np.ndarray  # (I, J) bool
    rates: np.ndarray  # (P,) Mbps
    g_x: float
    g_r: float
    g_y: float
    consensus: ConsensusRates | None = None

    @property
    def dual(self) -> float:
        return self.g_x + self.g_r + self.g_y


@dataclass
class DualTrace:
    dual: list = field(default_factory=list)
    best_dual: list = field(default_factory=list)
    best_primal: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    z_mu_norm: list = field(default_factory=list)
    z_lambda_norm: list = field(default_factory=list)
    converged: bool = False
    converged_iteration: int | None = None
    error: str | None = None
    last_attempt: PrimalSolution | None = None

    def __len__(self):
        return len(self.dual)

    def append(self, dual, best_dual, best_primal, gap, zmu, zlam):
        self.dual.append(dual)
        self.best_dual.append(best_dual)
        self.best_primal.append(best_primal)
        self.gap.append(gap)
        self.z_mu_norm.append(zmu)
        self.z_lambda_norm.append(zlam)

    def rows(self):
        for t in range(len(self)):
            yield (t + 1, self.dual[t], self.best_dual[t], self.best_primal[t], self.gap[t],
                   self.z_mu_norm[t], self.z_lambda_norm[t])

    def to_csv(self, path=None) -> str:
        """CSV with one row per iteration; subgradient norms in bits/s."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isinf(v)):
        return "" if v is None else ("inf" if v > 0 else "-inf")
    return repr(float(v))


# ---------------------------------------------------------------- pieces

def dual_value(state: DualState, inst: Instance, mode: str = "centralized",
               inner_iters: int = 1000, inner_step: float = 0.3,
               warm: dict | None = None) -> SubproblemSolutions:
    """Solve all three subproblems at the current prices.

    ``warm`` carries the rate LP basis between calls (centralized mode).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    I = inst.n_users
    pairs = inst.relaxed_pairs
    lam = np.where(pairs, state.lam, 0.0)
    full = inst.full_rate
    scores = inst.scores / I

    levels = np.empty(I, dtype=int)
    g_x = 0.0
    for i in range(I):
        q = select_quality(scores, inst.rates, state.mu[i], lam[i], full[i])
        levels[i] = q
        g_x += quality_values(scores, inst.rates, state.mu[i], float(lam[i] @ full[i]))[q - 1]

    coeffs = state.mu[inst.path_user] - lam[inst.path_user, inst.path_source]
    consensus = None
    if mode == "centralized":
        rates, g_r = solve_rates_centralized(coeffs, inst, warm)
    else:
        consensus = solve_rates_distributed(coeffs, inst, step=inner_step,
                                            max_iters=inner_iters,
                                            warm_prices=state.consensus_prices)
        rates = consensus.rates
        # the consensus dual bound keeps D a valid upper bound
        g_r = consensus.dual_bound

    y = np.zeros((I, inst.n_nodes), dtype=bool)
    g_y = 0.0
    for j in np.flatnonzero(inst.edge):
        gains = lam[:, j] * full[:, j]
        col = assign_compute(gains, inst.task_cost, inst.compute_capacity[j], pairs[:, j])
        y[:, j] = col
        g_y += float(gains[col].sum())
    return SubproblemSolutions(levels, y, rates, g_x, g_r, g_y, consensus)


def subgradients(sol: SubproblemSolutions, inst: Instance):
    """Constraint residuals at the subproblem answers, in Mbps.

    ``z_mu[i]`` is delivered minus demanded rate; ``z_lam[i, j]`` is rate
    sourced at ``j`` minus what the content rule allows. Entries outside
    the relaxed pairs are zero.
    """
    I, J = inst.n_users, inst.n_nodes
    delivered = np.bincount(inst.path_user, weights=sol.rates, minlength=I)
    z_mu = delivered - inst.rates[sol.levels - 1]
    sourced = np.zeros((I, J))
    np.add.at(sourced, (inst.path_user, inst.path_source), sol.rates)
    top = (sol.levels == inst.Q).astype(float)
    allowed = inst.full_rate * (top[:, None] + sol.y)
    z_lam = np.where(inst.relaxed_pairs, sourced - allowed, 0.0)
    return z_mu, z_lam


def update_duals(state: DualState, z_mu, z_lam, tau_mu: float | None = None,
                 tau_lam: float | None = None, inst: Instance | None = None,
                 lam_rule: str = "descent") -> DualState:
    """One projected subgradient step on the dual.

    The dual objective falls with ``mu`` along ``z_mu`` and rises with
    ``lam`` along ``z_lam`` (the content term enters the Lagrangian with a
    minus sign), so descent is ``mu - tau z_mu`` and ``[lam + tau z_lam]+``.
    ``lam_rule="published"`` applies ``[lam - tau z_lam]+`` instead, which
    moves ``lam`` uphill; it exists for comparison only.
    """
    if lam_rule not in ("descent", "published"):
        raise ValueError("lam_rule must be 'descent' or 'published'")
    if tau_mu is None or tau_lam is None:
        if inst is None:
            raise ValueError("pass explicit steps or the instance for the default schedule")
        tau = state.step(inst)
        tau_mu = tau if tau_mu is None else tau_mu
        tau_lam = tau if tau_lam is None else tau_lam
    sign = 1.0 if lam_rule == "descent" else -1.0
    mu = state.mu - tau_mu * np.asarray(z_mu, dtype=float)
    lam = np.maximum(0.0, state.lam + sign * tau_lam * np.asarray(z_lam, dtype=float))
    return replace(state, mu=mu, lam=lam, t=state.t + 1)


# ---------------------------------------------------------------- recovery

def _deliver(inst: Instance, levels, y, cache: dict | None):
    """Max-coverage rates for fixed levels and compute assignment."""
    top = levels == inst.Q
    src = inst.path_source
    usr = inst.path_user
    allowed = (src == inst.origin) | top[usr] | y[usr, src]
    key = (levels.tobytes(), allowed.tobytes())
    if cache is not None and key in cache:
        return cache[key]
    demand = inst.rates[levels - 1]
    cols = np.flatnonzero(allowed)
    rates = np.zeros(inst.n_paths)
    if cols.size:
        per_user = np.zeros((inst.n_users, cols.size))
        per_user[usr[cols], np.arange(cols.size)] = 1.0
        inc = inst.wired_incidence[:, cols]
        A = np.vstack([inc, (1.0 / inst.path_gamma[cols])[None, :], per_user])
        b = np.concatenate([inst.wired_cap, [inst.bandwidth], demand])
        keep = np.any(A != 0, axis=1)
        # fraction-of-demand objective serves cheap requests first
        res = lp_solve(1.0 / demand[usr[cols]], A[keep], b[keep], lo=0.0, hi=inst.top_rate)
        rates[cols] = res.x
    got = np.bincount(usr, weights=rates, minlength=inst.n_users)
    served = got >= demand * (1.0 - 1e-10)
    out = (rates, served)
    if cache is not None:
        cache[key] = out
    return out


def _assign_for_levels(inst: Instance, levels, y) -> np.ndarray:
    """Keep transcoding jobs only for sub-top levels, then fill spare budget."""
    y = y & (levels < inst.Q)[:, None] & inst.relaxed_pairs
    load = inst.task_cost @ y
    for i in np.flatnonzero(levels < inst.Q):
        for j in np.flatnonzero(inst.relaxed_pairs[i] & ~y[i]):
            if load[j] + inst.task_cost[i] <= inst.compute_capacity[j] + 1e-12:
                y[i, j] = True
                load[j] += inst.task_cost[i]
    return y


def _within_budget(inst: Instance, y) -> np.ndarray:
    """Drop jobs on misses and, per node, the highest-index jobs over budget."""
    y = y & inst.relaxed_pairs
    for j in np.flatnonzero(inst.edge):
        members = list(np.flatnonzero(y[:, j]))
        while members and inst.task_cost[members].sum() > inst.compute_capacity[j] + 1e-12:
            y[members.pop(), j] = False
    return y


def recover_primal(levels, y, inst: Instance, cache: dict | None = None) -> PrimalSolution:
    """Turn subproblem choices into a feasible schedule, or report why not.

    Levels and compute assignment are kept when their restricted rate LP
    meets every demand. Otherwise jobs are reassigned to users below the
    top level, and unmet users step down the ladder; a user already at the
    lowest level makes the largest other request step down instead. When
    nothing is left to downgrade the solution comes back infeasible with
    the unservable users listed.
    """
    levels = np.asarray(levels, dtype=int).copy()
    y = _within_budget(inst, np.asarray(y, dtype=bool).copy())
    rates, served = _deliver(inst, levels, y, cache)
    if served.all():
        return PrimalSolution(levels, y, rates, inst.utility(levels), True)

    y = _assign_for_levels(inst, levels, y)
    while True:
        rates, served = _deliver(inst, levels, y, cache)
        unmet = ~served
        if not unmet.any():
            return PrimalSolution(levels, y, rates, inst.utility(levels), True)
        down = unmet & (levels > 1)
        if down.any():
            levels[down] -= 1
        else:
            others = served & (levels > 1)
            if not others.any():
                bad = tuple(int(i) for i in np.flatnonzero(unmet))
                logger.debug("users %s cannot be served at any level", bad)
                return PrimalSolution(levels, y, rates, inst.utility(levels), False,
                                      {"unservable": bad}, bad)
            load = np.where(others, inst.rates[levels - 1], -np.inf)
            levels[int(np.argmax(load))] -= 1
        y = _assign_for_levels(inst, levels, y)


# ---------------------------------------------------------------- driver

def run(inst: Instance, max_iters: int = 2000, tol: float = 1e-3, mode: str = "centralized",
        step_a: float = 10.0, step_b: float = 10.0, patience: int = 100,
        inner_iters: int = 1000, inner_step: float = 0.3,
        incumbent: PrimalSolution | None = None):
    """Subgradient iterations until the relative gap stays below ``tol``.

    Stops after ``patience`` consecutive iterations under ``tol``, at once
    when the gap closes exactly, or after ``max_iters``. ``incumbent`` seeds
    the best known feasible schedule (it must be feasible for ``inst``).

    Returns ``(trace, best_solution)``; ``best_solution`` is ``None`` when no
    feasible schedule was found, in which case the last recovery attempt is
    attached to the trace as ``last_attempt``.
    """
    validate_instance(inst)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    state = DualState.initial(inst, step_a, step_b)
    trace = DualTrace()
    cache: dict = {}
    warm: dict = {}
    best: PrimalSolution | None = incumbent if incumbent is not None and incumbent.feasible else None
    best_primal = best.utility if best is not None else -math.inf
    best_dual = math.inf
    streak = 0
    attempt = None
    try:
        for _ in range(max_iters):
            sol = dual_value(state, inst, mode, inner_iters, inner_step, warm)
            if sol.consensus is not None:
                state.consensus_prices = sol.consensus.prices
            best_dual = min(best_dual, sol.dual)
            attempt = recover_primal(sol.levels, sol.y, inst, cache)
            if attempt.feasible and attempt.utility > best_primal:
                best, best_primal = attempt, attempt.utility
            gap = (best_dual - best_primal) / max(1.0, abs(best_dual))
            z_mu, z_lam = subgradients(sol, inst)
            trace.append(sol.dual, best_dual, best_primal, gap,
                         float(np.linalg.norm(z_mu)) * MBPS,
                         float(np.linalg.norm(z_lam)) * MBPS)
            if gap < tol:
                if streak == 0:
                    trace.converged_iteration = len(trace)
                streak += 1
                if gap <= 1e-12 or streak >= patience:
                    trace.converged = True
                    break
            else:
                streak = 0
                trace.converged_iteration = None
            state = update_duals(state, z_mu, z_lam, inst=inst)
    except Exception as exc:  # trace is returned even when a solve fails
        trace.error = f"{type(exc).__name__}: {exc}"
        logger.warning("dual loop stopped early: %s", trace.error)
    trace.last_attempt = attempt
    return trace, best


class DualDecompositionSolver(BaseEstimator):
    """Price-based solver with an estimator-style interface.

    Parameters
    ----------
    max_iters : int
        Cap on dual iterations.
    tol : float
        Relative duality gap treated as converged.
    mode : {"centralized", "distributed"}
        How the rate subproblem is solved.
    step_a, step_b : float
        Dual step ``step_a / (step_b + t)`` (normalized, see :meth:`DualState.step`).
    patience : int
        Consecutive below-``tol`` iterations required to stop.
    inner_iters, inner_step : int, float
        Consensus iterations and step for the distributed rate solver.

    Attributes
    ----------
    solution_ : PrimalSolution or None
        Best feasible schedule found.
    levels_ : ndarray
        1-based quality level per user (from ``solution_``).
    trace_ : DualTrace
    dual_bound_ : float
        Smallest dual value seen; upper bound on the optimal mean score.
    utility_ : float
        Mean score of ``solution_`` (``-inf`` if none).
    gap_ : float
        Final relative duality gap.
    n_iter_ : int
    """

    def __init__(self, max_iters=2000, tol=1e-3, mode="centralized", step_a=10.0,
                 step_b=10.0, patience=100, inner_iters=1000, inner_step=0.3):
        self.max_iters = max_iters
        self.tol = tol
        self.mode = mode
        self.step_a = step_a
        self.step_b = step_b
        self.patience = patience
        self.inner_iters = inner_iters
        self.inner_step = inner_step

    def fit(self, instance: Instance, y=None, incumbent: PrimalSolution | None = None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_iters < 1 or self.tol <= 0:
            raise ValueError("max_iters must be >= 1 and tol > 0")
        validate_instance(instance)
        trace, best = run(instance, self.max_iters, self.tol, self.mode, self.step_a,
                          self.step_b, self.patience, self.inner_iters, self.inner_step,
                          incumbent)
        self.trace_ = trace
        self.solution_ = best
        self.n_iter_ = len(trace)
        self.dual_bound_ = trace.best_dual[-1] if len(trace) else math.inf
        self.utility_ = best.utility if best is not None else -math.inf
        self.gap_ = trace.gap[-1] if len(trace) else math.inf
        self.levels_ = best.levels.copy() if best is not None else None
        return self

    def fit_predict(self, instance: Instance, y=None):
        return self.fit(instance).levels_

    def score(self, instance: Instance | None = None, y=None) -> float:
        check_is_fitted(self, "trace_")
        return self.utility_
