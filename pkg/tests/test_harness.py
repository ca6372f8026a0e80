import csv
import io
import json

import numpy as np
import pytest

from mecvideo.harness import (
    CSV_COLUMNS,
    SCHEMA,
    ExperimentSpec,
    MetricsRecord,
    apply_baseline,
    build_scenario,
    emit,
    records_to_csv,
    run_experiment,
    sweep_config,
)
from mecvideo.config import load_config
from mecvideo.oracle import check_feasible, solve_exact
from mecvideo.problem import within_bound

# three network nodes, three users, three levels: inside the exact-solver bound
TINY = {
    "counts": {"sbs": 1, "users": 3},
    "k_max": 2,
    "attach_m": 2,
    "backhaul_mbps": {"mbs_gw": 6.0, "sbs_mbs": 4.0, "origin_gw": 100.0},
    "ladder": [
        {"q": 1, "v_mbps": 1.0, "score": 1.5},
        {"q": 2, "v_mbps": 2.5, "score": 2.4},
        {"q": 3, "v_mbps": 5.0, "score": 3.2},
    ],
    "hd_level": 3,
    "compute_mbps": {"mbs": 2.0, "sbs": 1.0, "task_cost": 1.0},
}

FAST = {"max_iters": 60}


def record(**kw):
    base = dict(axis="users", value=5.0, repetition=0, seed=0, baseline="full-mecc",
                status="ok", mean_utility=3.25, level_counts=[1, 0, 4], hd_ratio=0.8,
                hit_rate_mbs=0.2, hit_rate_sbs=0.1, analytic_hit_mbs=0.47,
                analytic_hit_sbs=0.34, iterations=10, final_gap=0.01, dual_bound=3.3,
                feasible_checked=True)
    base.update(kw)
    return MetricsRecord(**base)


def test_baselines_strip_resources():
    cfg = load_config()
    assert apply_baseline(cfg, "full-mecc") == cfg
    cache_only = apply_baseline(cfg, "cache-only")
    assert cache_only["compute_mbps"]["mbs"] == 0.0
    assert cache_only["cache_files"] == cfg["cache_files"]
    none = apply_baseline(cfg, "no-mecc")
    assert none["cache_files"] == {"gw": 0, "mbs": 0, "sbs": 0}
    with pytest.raises(ValueError):
        apply_baseline(cfg, "cloud")


def test_scenario_assembly():
    scn = build_scenario(seed=3)
    inst = scn.instance
    assert inst.n_users == 15
    assert inst.nodes[0] == "origin" and inst.nodes[1] == "gw0"
    assert inst.hit[:, inst.origin].all()
    mbs = inst.nodes.index("mbs0")
    for i, u in enumerate(inst.users):
        assert inst.hit[i, mbs] == (scn.requests[u] <= 200)
    assert inst.compute_capacity[mbs] == 150.0
    assert set(inst.task_cost) == {25.0}


def test_baselines_share_requests_and_topology():
    a = build_scenario(seed=4, baseline="full-mecc")
    b = build_scenario(seed=4, baseline="no-mecc")
    assert a.requests == b.requests
    assert a.instance.topology.to_dict() == b.instance.topology.to_dict()
    assert not b.instance.relaxed_pairs.any()


def test_sweep_config_scales_classes():
    cfg = sweep_config({}, "compute_capacity", 300.0)
    assert cfg["compute_mbps"]["mbs"] == 300.0 and cfg["compute_mbps"]["sbs"] == 100.0
    cfg = sweep_config({}, "cache_size", 100)
    assert cfg["cache_files"]["mbs"] == 100 and cfg["cache_files"]["sbs"] == 50
    assert sweep_config({}, "users", 7)["counts"]["users"] == 7


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(axis="power", values=[1])
    with pytest.raises(ValueError):
        ExperimentSpec(axis="users", values=[])
    with pytest.raises(ValueError):
        ExperimentSpec(axis="users", values=[-1])
    with pytest.raises(ValueError):
        ExperimentSpec(baselines=["cloud"])
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"axes": "users"})


def test_default_point_counts_all_users():
    recs = run_experiment(ExperimentSpec(seed=1, solver=FAST))
    assert len(recs) == 1
    assert sum(recs[0].level_counts) == 15
    assert recs[0].status == "ok" and recs[0].feasible_checked


def test_one_record_per_point_repetition_baseline():
    spec = ExperimentSpec(config=TINY, axis="users", values=[2, 3], repetitions=2,
                          baselines=["full-mecc", "no-mecc"], solver=FAST)
    recs = run_experiment(spec)
    assert len(recs) == 8
    assert [(r.value, r.repetition, r.baseline) for r in recs[:4]] == [
        (2, 0, "full-mecc"), (2, 0, "no-mecc"), (2, 1, "full-mecc"), (2, 1, "no-mecc")]
    assert [sum(r.level_counts) for r in recs] == [2, 2, 2, 2, 3, 3, 3, 3]


def test_baseline_ordering_small():
    for seed in range(3):
        spec = ExperimentSpec(config=TINY, seed=seed,
                              baselines=["full-mecc", "cache-only", "no-mecc"], solver=FAST)
        full, cache, none = (r.mean_utility for r in run_experiment(spec))
        assert full >= cache >= none


def test_cache_sweep_oracle_monotone():
    for seed in range(4):
        prev = -np.inf
        for size in (0, 100, 200, 1000):
            scn = build_scenario(sweep_config(TINY, "cache_size", size), seed)
            assert within_bound(scn.instance)
            opt = solve_exact(scn.instance)
            assert opt is not None and all(check_feasible(opt, scn.instance).values())
            assert opt.utility >= prev - 1e-12
            prev = opt.utility


def test_failures_are_recorded_not_raised(monkeypatch):
    import mecvideo.harness as h

    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(h, "solve_scenario", boom)
    recs = run_experiment(ExperimentSpec(config=TINY, axis="users", values=[2, 3], solver=FAST))
    assert [r.status for r in recs] == ["failed", "failed"]
    assert "solver exploded" in recs[0].error


def test_single_record_csv(tmp_path):
    path = emit([record()], "csv", tmp_path / "m.csv")
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 2
    assert rows[1][CSV_COLUMNS.index("level_counts")] == "1 0 4"
    assert rows[1][CSV_COLUMNS.index("mean_utility")] == "3.25"


def test_emit_is_byte_stable(tmp_path):
    recs = [record(), record(baseline="no-mecc", mean_utility=float("nan"), status="failed")]
    for fmt in ("csv", "json"):
        a = emit(recs, fmt, tmp_path / f"a.{fmt}").read_bytes()
        b = emit(recs, fmt, tmp_path / f"b.{fmt}").read_bytes()
        assert a == b


def test_json_layout(tmp_path):
    doc = json.loads(emit([record(mean_utility=np.float64(3.5))], "json",
                          tmp_path / "m.json").read_text())
    assert doc["schema"] == SCHEMA
    assert doc["records"][0]["mean_utility"] == 3.5
    assert "wall_time" not in doc["records"][0]


def test_timing_is_opt_in():
    assert "wall_time" not in records_to_csv([record()]).splitlines()[0]
    assert records_to_csv([record()], include_timing=True).splitlines()[0].endswith("wall_time")


def test_empty_emit_refused(tmp_path):
    with pytest.raises(ValueError):
        emit([], "csv", tmp_path / "none.csv")
    assert not (tmp_path / "none.csv").exists()
    with pytest.raises(ValueError):
        emit([record()], "xml", tmp_path / "m.xml")
    assert not (tmp_path / "m.xml").exists()


def test_experiment_csv_reproducible(tmp_path):
    spec = ExperimentSpec(config=TINY, axis="cache_size", values=[0, 200], seed=5,
                          baselines=["full-mecc", "cache-only"], solver=FAST)
    a = emit(run_experiment(spec), "csv", tmp_path / "a.csv").read_bytes()
    b = emit(run_experiment(spec), "csv", tmp_path / "b.csv").read_bytes()
    assert a == b
