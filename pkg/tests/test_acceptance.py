"""One test per acceptance criterion; each logs a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from mecvideo.content import QualityLadder, VideoLibrary, analytic_hit_rate
from mecvideo.dual_solver import run
from mecvideo.harness import ExperimentSpec, emit, run_experiment
from mecvideo.oracle import check_feasible, solve_exact
from mecvideo.problem import random_small_instance, within_bound
from mecvideo.scenario import dbm_to_watt, pathloss_db, spectral_efficiency
from mecvideo.subproblems import assign_compute, solve_rates_centralized, solve_rates_distributed

# mpmath direct summation, 50 digits
HIT_200 = 0.47383785839831965609
HIT_100 = 0.33976837953298729235

pytestmark = pytest.mark.slow

ORACLE_ITERS = 400  # dual iterations per oracle instance
SCENARIO_ITERS = 300  # dual iterations per baseline on full-size scenarios


@pytest.fixture(scope="module")
def oracle_suite():
    """First 100 seeds with a feasible optimum, solved both ways."""
    rows = []
    seed = 0
    start = time.perf_counter()
    while len(rows) < 100:
        inst = random_small_instance(seed)
        assert within_bound(inst)
        opt = solve_exact(inst)
        if opt is not None:
            trace, best = run(inst, max_iters=ORACLE_ITERS)
            rows.append((seed, inst, opt, trace, best))
        seed += 1
    return rows, time.perf_counter() - start


@pytest.fixture(scope="module")
def baseline_suite():
    out = []
    for seed in range(20):
        spec = ExperimentSpec(seed=seed, baselines=["full-mecc", "cache-only", "no-mecc"],
                              solver={"max_iters": SCENARIO_ITERS})
        start = time.perf_counter()
        recs = run_experiment(spec)
        out.append((seed, recs, time.perf_counter() - start))
    return out


def test_1_oracle_equivalence(oracle_suite, acceptance_log):
    rows, elapsed = oracle_suite
    close = sum(best is not None and best.utility >= 0.95 * opt.utility
                for _, _, opt, _, best in rows)
    slack = min(trace.best_dual[-1] - opt.utility for _, _, opt, trace, _ in rows)
    ok = close >= 90 and slack >= -1e-6 and elapsed <= 60.0
    acceptance_log(1, "oracle equivalence", ok,
                   f"{close}/100 within 95%, min dual - opt {slack:.2e}, {elapsed:.1f} s")
    assert ok


def _brute(gains, costs, cap):
    n = gains.size
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    value = masks @ np.maximum(gains, 0.0)
    value[masks @ costs > cap + 1e-9] = -np.inf
    return float(value.max())


def test_2_knapsack_exactness(acceptance_log):
    rng = np.random.default_rng(20240)
    cases = []
    for _ in range(200):
        n = int(rng.integers(1, 16))
        gains = rng.uniform(-2.0, 10.0, n)
        costs = rng.choice([5.0, 12.5, 25.0, 40.0, 50.0, 3.25], n)
        cap = float(rng.uniform(0.0, costs.sum()))
        cases.append((gains, costs, cap))
    start = time.perf_counter()
    picks = [assign_compute(g, c, cap) for g, c, cap in cases]
    elapsed = time.perf_counter() - start
    bad = 0
    for (g, c, cap), pick in zip(cases, picks):
        if c[pick].sum() > cap + 1e-9 or abs(g[pick].sum() - _brute(g, c, cap)) > 1e-9:
            bad += 1
    ok = bad == 0 and elapsed <= 5.0
    acceptance_log(2, "knapsack exactness", ok, f"{bad}/200 mismatches, {elapsed:.2f} s")
    assert ok


def test_3_rate_mode_equivalence(acceptance_log):
    worst = 0.0
    most_iters = 0
    for seed in range(50):
        inst = random_small_instance(1000 + seed)
        coeffs = np.random.default_rng(seed).uniform(-0.5, 1.0, inst.n_paths)
        _, central = solve_rates_centralized(coeffs, inst)
        d = solve_rates_distributed(coeffs, inst, step=0.3, max_iters=5000)
        rel = abs(central - d.objective) / max(abs(central), 1e-12) if central else d.objective
        worst = max(worst, rel)
        most_iters = max(most_iters, d.iterations)
    ok = worst <= 0.01 and most_iters <= 5000
    acceptance_log(3, "rate-mode equivalence", ok,
                   f"worst gap {100 * worst:.3f}%, max {most_iters} consensus iterations")
    assert ok


def test_4_analytic_hit_rates(acceptance_log):
    lib = VideoLibrary(1000, 0.56, QualityLadder((1e6,), (1.0,)))
    w = [k ** -0.56 for k in range(1, 1001)]
    total = math.fsum(w)
    direct = {c: math.fsum(w[:c]) / total for c in (200, 100)}
    got = {c: analytic_hit_rate(lib, c) for c in (200, 100)}
    exact = all(abs(got[c] - direct[c]) <= 1e-12 for c in got)
    frozen = abs(got[200] - HIT_200) <= 1e-12 and abs(got[100] - HIT_100) <= 1e-12
    near = abs(got[200] - 0.5) <= 0.08 and abs(got[100] - 0.4) <= 0.08
    ok = exact and frozen and near
    acceptance_log(4, "analytic hit rates", ok,
                   f"200 files {got[200]:.4f} vs 0.5, 100 files {got[100]:.4f} vs 0.4")
    assert ok


def test_5_radio_model(acceptance_log):
    psd = float(dbm_to_watt(49.0)) / 20e6
    gain = 10.0 ** (-pathloss_db(100.0) / 10.0)
    gamma = spectral_efficiency(gain, psd, float(dbm_to_watt(-174.0)))
    pl = pathloss_db(100.0)
    ok = abs(gamma - 11.957) <= 0.01 and pl == 114.0
    acceptance_log(5, "radio model", ok, f"gamma {gamma:.5f}, PL(100 m) {pl}")
    assert ok


def test_6_baseline_ordering(baseline_suite, acceptance_log):
    bad = []
    slowest = 0.0
    for seed, recs, elapsed in baseline_suite:
        u = {r.baseline: r.mean_utility for r in recs}
        if not (u["full-mecc"] >= u["cache-only"] >= u["no-mecc"]):
            bad.append(seed)
        slowest = max(slowest, elapsed)
    ok = not bad and slowest <= 120.0
    acceptance_log(6, "baseline ordering", ok,
                   f"{20 - len(bad)}/20 ordered, slowest seed {slowest:.1f} s")
    assert ok


def test_7_feasibility_audit(oracle_suite, baseline_suite, acceptance_log):
    checked = failed = 0
    rows, _ = oracle_suite
    for _, inst, opt, trace, best in rows:
        for sol in (opt, best, trace.last_attempt):
            if sol is not None and sol.feasible:
                checked += 1
                failed += not all(check_feasible(sol, inst).values())
    for _, recs, _ in baseline_suite:
        for r in recs:
            checked += 1
            failed += not (r.status == "ok" and r.feasible_checked)
    ok = failed == 0
    acceptance_log(7, "feasibility audit", ok, f"{failed} violations in {checked} solutions")
    assert ok


def test_8_determinism(tmp_path, acceptance_log):
    spec = ExperimentSpec(axis="cache_size", values=[100, 200], seed=3,
                          baselines=["full-mecc", "cache-only", "no-mecc"],
                          solver={"max_iters": 40})
    a = emit(run_experiment(spec), "csv", tmp_path / "a.csv").read_bytes()
    b = emit(run_experiment(spec), "csv", tmp_path / "b.csv").read_bytes()
    ok = a == b
    acceptance_log(8, "determinism", ok, f"{len(a)} bytes, identical={ok}")
    assert ok
