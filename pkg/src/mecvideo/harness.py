"""Scenario assembly, experiment sweeps, baselines and metrics output."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import load_config
from .content import (
    CacheState,
    ComputeModel,
    QualityLadder,
    VideoLibrary,
    analytic_hit_rate,
    hit_matrix,
    lfu_place,
    sample_requests,
)
from .dual_solver import DualDecompositionSolver
from .oracle import check_feasible
from .problem import Instance, PrimalSolution, make_instance
from .scenario import build_hetnet

logger = logging.getLogger(__name__)

BASELINES = ("full-mecc", "cache-only", "no-mecc")
AXES = ("compute_capacity", "cache_size", "users")
SCHEMA = "mecvideo.metrics/1"


@dataclass
class Scenario:
    instance: Instance
    requests: dict
    library: VideoLibrary
    caches: CacheState
    config: dict
    seed: int
    baseline: str


def apply_baseline(config: Mapping, baseline: str) -> dict:
    """Config with the baseline's resources removed.

    ``cache-only`` switches off every transcoding budget (cached copies can
    only be shipped at top quality); ``no-mecc`` also empties every edge
    cache, leaving the origin as the only source.
    """
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}")
    cfg = copy.deepcopy(dict(config))
    if baseline in ("cache-only", "no-mecc"):
        cfg["compute_mbps"] = {**cfg["compute_mbps"], "gw": 0.0, "mbs": 0.0, "sbs": 0.0}
    if baseline == "no-mecc":
        cfg["cache_files"] = {"gw": 0, "mbs": 0, "sbs": 0}
    return cfg


def build_scenario(config: Mapping | None = None, seed: int | None = None,
                   baseline: str = "full-mecc") -> Scenario:
    """Topology, requests, LFU caches and compute budgets for one run.

    Requests are drawn from a stream derived from ``seed`` independently of
    the topology stream, so baselines at the same seed share both.
    """
    cfg = load_config(config)
    seed = cfg["seed"] if seed is None else int(seed)
    cfg = apply_baseline(cfg, baseline)
    topo = build_hetnet(cfg, seed)

    ladder = QualityLadder.from_config(cfg["ladder"])
    lib_cfg = cfg["library"]
    library = VideoLibrary(int(lib_cfg["files"]), float(lib_cfg["zipf"]), ladder,
                           float(lib_cfg["duration_s"]))
    users = [u.id for u in topo.users]
    files = sample_requests(library.pmf(), len(users), rng=np.random.default_rng([seed, 1]))
    requests = {u: int(f) for u, f in zip(users, files)}

    kind_key = {"gateway": "gw", "macro-bs": "mbs", "small-bs": "sbs"}
    edge = [n for n in topo.nodes if n.kind in kind_key]
    cap_files = {n.id: int(cfg["cache_files"].get(kind_key[n.kind], 0)) for n in edge}
    caches = CacheState({n: lfu_place(library, c) for n, c in cap_files.items()}, cap_files)
    comp_cfg = cfg["compute_mbps"]
    compute = ComputeModel(
        {n.id: float(comp_cfg.get(kind_key[n.kind], 0.0)) * 1e6 for n in edge},
        {u: float(comp_cfg["task_cost"]) * 1e6 for u in users},
    )
    nodes = [topo.origin.id] + [n.id for n in edge]
    hits = hit_matrix(requests, caches, ladder, nodes, topo.origin.id, library.file_count)
    inst = make_instance(topo, ladder, hits, compute, k_max=int(cfg["k_max"]),
                         hd_level=int(cfg["hd_level"]))
    return Scenario(inst, requests, library, caches, cfg, seed, baseline)


@dataclass
class ExperimentSpec:
    """A sweep over one axis, repeated over seeds, for several baselines.

    ``compute_capacity`` values are the MBS budget in Mbps (other node
    classes keep their default ratio to the MBS), ``cache_size`` values the
    MBS cache in files (same ratio rule), ``users`` the user count.
    """

    config: dict = field(default_factory=dict)
    axis: str | None = None
    values: Sequence[float] = ()
    repetitions: int = 1
    seed: int = 0
    baselines: Sequence[str] = ("full-mecc",)
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis is not None and self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.axis is not None and not self.values:
            raise ValueError("a sweep axis needs values")
        if any(v < 0 for v in self.values):
            raise ValueError("sweep values must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for b in self.baselines:
            if b not in BASELINES:
                raise ValueError(f"unknown baseline {b!r}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentSpec":
        known = {"config", "axis", "values", "repetitions", "seed", "baselines", "solver"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown experiment keys: {sorted(extra)}")
        return cls(**{k: doc[k] for k in known if k in doc})

    def points(self) -> list:
        return list(self.values) if self.axis is not None else [None]


def sweep_config(config: Mapping, axis: str | None, value) -> dict:
    cfg = load_config(config)
    if axis is None:
        return cfg
    if axis == "users":
        cfg["counts"]["users"] = int(value)
    elif axis == "compute_capacity":
        base = cfg["compute_mbps"]
        ratio = value / base["mbs"] if base["mbs"] > 0 else None
        for key in ("gw", "mbs", "sbs"):
            base[key] = float(value) if key == "mbs" else (
                base[key] * ratio if ratio is not None else 0.0)
    elif axis == "cache_size":
        base = cfg["cache_files"]
        ratio = value / base["mbs"] if base["mbs"] > 0 else None
        for key in ("gw", "mbs", "sbs"):
            base[key] = int(value) if key == "mbs" else (
                int(base[key] * ratio) if ratio is not None else 0)
    return load_config(cfg)


@dataclass
class MetricsRecord:
    axis: str
    value: float | None
    repetition: int
    seed: int
    baseline: str
    status: str  # ok | infeasible | failed
    mean_utility: float
    level_counts: list
    hd_ratio: float
    hit_rate_mbs: float
    hit_rate_sbs: float
    analytic_hit_mbs: float
    analytic_hit_sbs: float
    iterations: int
    final_gap: float
    dual_bound: float
    feasible_checked: bool
    wall_time: float = 0.0
    error: str = ""


CSV_COLUMNS = (
    "axis", "value", "repetition", "seed", "baseline", "status", "mean_utility",
    "level_counts", "hd_ratio", "hit_rate_mbs", "hit_rate_sbs", "analytic_hit_mbs",
    "analytic_hit_sbs", "iterations", "final_gap", "dual_bound", "feasible_checked", "error",
)


def _class_hit_rate(scn: Scenario, kind: str) -> float:
    nodes = [n.id for n in scn.instance.topology.nodes if n.kind == kind]
    if not nodes:
        return float("nan")
    reqs = list(scn.requests.values())
    rates = [np.mean([scn.caches.holds(n, f) for f in reqs]) for n in nodes]
    return float(np.mean(rates))


def solve_scenario(scn: Scenario, solver_opts: Mapping | None = None,
                   incumbent: PrimalSolution | None = None):
    solver = DualDecompositionSolver(**dict(solver_opts or {}))
    solver.fit(scn.instance, incumbent=incumbent)
    return solver


def _record(scn: Scenario, solver, axis, value, rep, wall, error="") -> MetricsRecord:
    inst = scn.instance
    lib = scn.library
    sol = solver.solution_ if solver is not None else None
    Q = inst.Q
    if sol is not None:
        counts = np.bincount(sol.levels, minlength=Q + 1)[1:].astype(int).tolist()
        hd = float(np.mean(sol.levels >= inst.hd_level_or_top()))
        checked = all(check_feasible(sol, inst).values())
        status = "ok" if checked else "failed"
        if not checked:
            error = error or "solution failed the feasibility audit"
        util = sol.utility
    else:
        counts = [0] * Q
        hd = 0.0
        checked = False
        util = float("nan")
        status = "failed" if error else "infeasible"
    cfg = scn.config
    return MetricsRecord(
        axis=axis or "",
        value=value,
        repetition=rep,
        seed=scn.seed,
        baseline=scn.baseline,
        status=status,
        mean_utility=util,
        level_counts=counts,
        hd_ratio=hd,
        hit_rate_mbs=_class_hit_rate(scn, "macro-bs"),
        hit_rate_sbs=_class_hit_rate(scn, "small-bs"),
        analytic_hit_mbs=analytic_hit_rate(lib, cfg["cache_files"]["mbs"]),
        analytic_hit_sbs=analytic_hit_rate(lib, cfg["cache_files"]["sbs"]),
        iterations=solver.n_iter_ if solver is not None else 0,
        final_gap=solver.gap_ if solver is not None else float("nan"),
        dual_bound=solver.dual_bound_ if solver is not None else float("nan"),
        feasible_checked=checked,
        wall_time=wall,
        error=error,
    )


def run_experiment(spec: ExperimentSpec, chain_baselines: bool = True) -> list[MetricsRecord]:
    """Solve every (sweep point, repetition, baseline) and collect metrics.

    Output order is (point, repetition, baseline). Baselines at one seed are
    solved from the most restricted upward (no-mecc, cache-only, full-mecc);
    with ``chain_baselines`` each solve starts from the previous baseline's
    schedule, which stays feasible because every baseline's feasible set
    contains the one before it. Failures are recorded and the run continues.
    """
    records = []
    order = [b for b in reversed(BASELINES) if b in spec.baselines]
    for value in spec.points():
        cfg = sweep_config(spec.config, spec.axis, value)
        for rep in range(spec.repetitions):
            seed = spec.seed + rep
            done = {}
            incumbent = prev = None
            for baseline in order:
                start = time.perf_counter()
                scn = None
                try:
                    scn = build_scenario(cfg, seed, baseline)
                    warm = None
                    if chain_baselines and incumbent is not None:
                        warm = _lift(incumbent, prev, scn.instance)
                    solver = solve_scenario(scn, spec.solver, warm)
                    rec = _record(scn, solver, spec.axis, value, rep,
                                  time.perf_counter() - start,
                                  solver.trace_.error or "")
                    if solver.solution_ is not None:
                        incumbent, prev = solver.solution_, scn.instance
                except Exception as exc:  # keep sweeping past a bad point
                    logger.exception("point %s rep %s baseline %s failed", value, rep, baseline)
                    rec = _failed(spec, value, rep, seed, baseline, exc,
                                  time.perf_counter() - start)
                done[baseline] = rec
            records += [done[b] for b in spec.baselines]
    return records


def _lift(sol: PrimalSolution, src: Instance, dst: Instance) -> PrimalSolution | None:
    """Re-index a schedule onto another baseline's instance of the same seed.

    Users and nodes coincide; paths are matched by their link sequence.
    Returns ``None`` if a used path is missing or the schedule fails the audit.
    """
    index = {(p.user, p.link_sequence): k for k, p in enumerate(dst.paths)}
    rates = np.zeros(dst.n_paths)
    for k, p in enumerate(src.paths):
        if sol.rates[k] <= 0:
            continue
        to = index.get((p.user, p.link_sequence))
        if to is None:
            return None
        rates[to] = sol.rates[k]
    y = np.asarray(sol.y, dtype=bool) & dst.relaxed_pairs
    lifted = PrimalSolution(sol.levels.copy(), y, rates, dst.utility(sol.levels))
    return lifted if all(check_feasible(lifted, dst).values()) else None


def _failed(spec, value, rep, seed, baseline, exc, wall) -> MetricsRecord:
    nan = float("nan")
    return MetricsRecord(spec.axis or "", value, rep, seed, baseline, "failed", nan, [], 0.0,
                         nan, nan, nan, nan, 0, nan, nan, False, wall,
                         f"{type(exc).__name__}: {exc}")


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def records_to_csv(records: Sequence[MetricsRecord], include_timing: bool = False) -> str:
    cols = CSV_COLUMNS + (("wall_time",) if include_timing else ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        d = asdict(r)
        w.writerow([_cell(d[c]) for c in cols])
    return buf.getvalue()


def _json_safe(v):
    v = _plain(v)
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None
    return v


def records_to_json(records: Sequence[MetricsRecord], include_timing: bool = False) -> str:
    rows = []
    for r in records:
        d = {k: _json_safe(v) for k, v in asdict(r).items()}
        if not include_timing:
            d.pop("wall_time")
        rows.append(d)
    return json.dumps({"schema": SCHEMA, "records": rows}, sort_keys=True, indent=2) + "\n"


def emit(records: Sequence[MetricsRecord], format: str, path: str | os.PathLike,
         include_timing: bool = False) -> Path:
    """Write metrics as CSV or JSON; identical records give identical bytes.

    Wall-clock time is left out unless ``include_timing`` is set, since it
    would break byte-stability.
    """
    if not records:
        raise ValueError("no records to emit")
    if format == "csv":
        text = records_to_csv(records, include_timing)
    elif format == "json":
        text = records_to_json(records, include_timing)
    else:
        raise ValueError("format must be 'csv' or 'json'")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path
