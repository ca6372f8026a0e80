"""Problem instances and primal solutions.

An :class:`Instance` freezes everything the solvers need as numpy arrays.
Rates are held in Mbps and spectrum in MHz internally; conversion to bits/s
happens at the edges (construction and export).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .content import ComputeModel, HitMatrix, QualityLadder
from .scenario import CandidatePath, Topology, enumerate_paths, simple_topology

MBPS = 1e6

# desk-size limits for exhaustive solving
MAX_USERS = 5
MAX_NODES = 4
MAX_LEVELS = 3
MAX_PATHS_PER_SOURCE = 2
MAX_ENUMERATION = 10**7


class InstanceError(ValueError):
    """Raised for inconsistent instance data."""


@dataclass(frozen=True, eq=False)
class Instance:
    users: tuple[str, ...]
    nodes: tuple[str, ...]  # content sources, origin included
    origin: int  # index of the origin in ``nodes``
    rates: np.ndarray  # (Q,) Mbps
    scores: np.ndarray  # (Q,)
    hit: np.ndarray  # (I, J) bool
    compute_capacity: np.ndarray  # (J,) Mbps, origin entry unused
    task_cost: np.ndarray  # (I,) Mbps
    path_user: np.ndarray  # (P,) user index
    path_source: np.ndarray  # (P,) node index
    path_gamma: np.ndarray  # (P,) bits/s/Hz of the wireless last hop
    wired_cap: np.ndarray  # (Lwd,) Mbps
    wired_incidence: np.ndarray  # (Lwd, P) 0/1
    bandwidth: float  # MHz
    paths: tuple[CandidatePath, ...] = ()
    wired_link_ids: tuple[int, ...] = ()
    hd_level: int | None = None
    topology: Topology | None = field(default=None, repr=False)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_paths(self) -> int:
        return self.path_user.size

    @property
    def Q(self) -> int:
        return self.rates.size

    @property
    def top_rate(self) -> float:
        return float(self.rates[-1])

    @property
    def edge(self) -> np.ndarray:
        """Mask of nodes subject to a compute budget (everything but the origin)."""
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.origin] = False
        return mask

    @property
    def relaxed_pairs(self) -> np.ndarray:
        """(I, J) mask of (user, node) content constraints carrying a multiplier."""
        return self.hit & self.edge[None, :]

    @property
    def full_rate(self) -> np.ndarray:
        """(I, J) deliverable rate on a hit: the top-level bitrate, else 0."""
        return np.where(self.hit, self.top_rate, 0.0)

    def paths_of(self, user: int) -> np.ndarray:
        return np.flatnonzero(self.path_user == user)

    def utility(self, levels) -> float:
        levels = np.asarray(levels, dtype=int)
        return float(np.mean(self.scores[levels - 1]))

    def hd_level_or_top(self) -> int:
        return self.hd_level if self.hd_level is not None else self.Q


@dataclass
class PrimalSolution:
    """Quality levels (1-based), compute assignment, path rates (Mbps)."""

    levels: np.ndarray  # (I,) int in 1..Q
    y: np.ndarray  # (I, J) bool
    rates: np.ndarray  # (P,) Mbps
    utility: float
    feasible: bool = True
    report: dict = field(default_factory=dict)
    unservable: tuple[int, ...] = ()

    def one_hot(self, Q: int) -> np.ndarray:
        out = np.zeros((Q, self.levels.size), dtype=int)
        out[self.levels - 1, np.arange(self.levels.size)] = 1
        return out

    def user_rates(self, instance: Instance) -> np.ndarray:
        return np.bincount(instance.path_user, weights=self.rates, minlength=instance.n_users)


def make_instance(topology: Topology, ladder: QualityLadder, hits: HitMatrix,
                  compute: ComputeModel, k_max: int = 3, hd_level: int | None = None,
                  diagnostics: list | None = None) -> Instance:
    """Assemble an :class:`Instance`; paths are enumerated from hitting sources only."""
    users = tuple(hits.users)
    nodes = tuple(hits.nodes)
    origin_id = topology.origin.id
    if origin_id not in nodes:
        raise InstanceError("the origin must be one of the content nodes")
    paths: list[CandidatePath] = []
    for i, u in enumerate(users):
        sources = [n for j, n in enumerate(nodes) if hits.status[i, j]]
        paths += enumerate_paths(topology, u, sources, k_max, diagnostics)
    uidx = {u: i for i, u in enumerate(users)}
    nidx = {n: j for j, n in enumerate(nodes)}
    wired = topology.wired_links
    wpos = {l.id: r for r, l in enumerate(wired)}
    inc = np.zeros((len(wired), len(paths)))
    gamma = np.zeros(len(paths))
    for p, path in enumerate(paths):
        for lid in path.link_sequence:
            if lid in wpos:
                inc[wpos[lid], p] = 1.0
        gamma[p] = topology.links[path.link_sequence[-1]].spectral_efficiency
    cap = np.array([compute.capacity.get(n, 0.0) for n in nodes]) / MBPS
    cost = np.array([compute.cost[u] for u in users]) / MBPS
    inst = Instance(
        users=users,
        nodes=nodes,
        origin=nidx[origin_id],
        rates=np.asarray(ladder.rates, dtype=float) / MBPS,
        scores=np.asarray(ladder.scores, dtype=float),
        hit=np.asarray(hits.status, dtype=bool).copy(),
        compute_capacity=cap,
        task_cost=cost,
        path_user=np.array([uidx[p.user] for p in paths], dtype=int),
        path_source=np.array([nidx[p.source_node] for p in paths], dtype=int),
        path_gamma=gamma,
        wired_cap=np.array([l.wired_capacity for l in wired], dtype=float) / MBPS,
        wired_incidence=inc,
        bandwidth=topology.spectrum_bandwidth / MBPS,
        paths=tuple(paths),
        wired_link_ids=tuple(l.id for l in wired),
        hd_level=hd_level,
        topology=topology,
    )
    validate_instance(inst)
    return inst


def validate_instance(inst: Instance) -> Instance:
    """Shape and range checks; returns the instance for chaining."""
    I, J, P = inst.n_users, inst.n_nodes, inst.n_paths
    if I == 0:
        raise InstanceError("instance has no users")
    if inst.hit.shape != (I, J):
        raise InstanceError("hit matrix shape mismatch")
    if not np.all(inst.hit[:, inst.origin]):
        raise InstanceError("the origin must hit every request")
    if inst.compute_capacity.shape != (J,) or np.any(inst.compute_capacity < 0):
        raise InstanceError("compute capacities must be non-negative, one per node")
    if inst.task_cost.shape != (I,) or np.any(inst.task_cost <= 0):
        raise InstanceError("task costs must be positive, one per user")
    if inst.rates.shape != inst.scores.shape or inst.rates.size == 0:
        raise InstanceError("ladder rates and scores must match")
    if np.any(np.diff(inst.rates) <= 0) or np.any(np.diff(inst.scores) <= 0):
        raise InstanceError("ladder must be strictly increasing")
    for arr in (inst.path_user, inst.path_source, inst.path_gamma):
        if arr.shape != (P,):
            raise InstanceError("path arrays must all have one entry per path")
    if P and (np.any(inst.path_gamma <= 0)):
        raise InstanceError("every path needs a positive wireless spectral efficiency")
    if P and not np.all(inst.hit[inst.path_user, inst.path_source]):
        raise InstanceError("a path starts at a node that misses its user's request")
    if inst.wired_incidence.shape != (inst.wired_cap.size, P):
        raise InstanceError("wired incidence shape mismatch")
    if np.any(inst.wired_cap <= 0) or inst.bandwidth <= 0:
        raise InstanceError("capacities must be positive")
    return inst


def within_bound(inst: Instance) -> bool:
    """Whether ``inst`` is small enough for exhaustive solving."""
    return not bound_violations(inst)


def bound_violations(inst: Instance) -> list[str]:
    out = []
    if inst.n_users > MAX_USERS:
        out.append(f"{inst.n_users} users > {MAX_USERS}")
    if inst.n_nodes - 1 > MAX_NODES:
        out.append(f"{inst.n_nodes - 1} network nodes > {MAX_NODES}")
    if inst.Q > MAX_LEVELS:
        out.append(f"{inst.Q} quality levels > {MAX_LEVELS}")
    if inst.n_paths:
        per_source = np.zeros((inst.n_users, inst.n_nodes), dtype=int)
        np.add.at(per_source, (inst.path_user, inst.path_source), 1)
        if per_source.max() > MAX_PATHS_PER_SOURCE:
            out.append(f"{per_source.max()} paths per source > {MAX_PATHS_PER_SOURCE}")
    size = inst.Q ** inst.n_users * 2 ** int(inst.relaxed_pairs.sum())
    if size > MAX_ENUMERATION:
        out.append(f"enumeration size {size} > {MAX_ENUMERATION}")
    return out


def toy_instance(
    wired: Sequence[tuple[str, str, float]],
    wireless: Sequence[tuple[str, str, float]],
    bandwidth_mhz: float,
    ladder: Sequence[tuple[float, float]],
    hits: Mapping[str, Sequence[str]],
    compute_mbps: Mapping[str, float] | None = None,
    task_cost_mbps: float = 1.0,
    k_max: int = 2,
) -> Instance:
    """Instance from hand-written edge lists, all figures in Mbps/MHz.

    ``ladder`` holds ``(rate_mbps, score)`` pairs and ``hits`` maps each user
    to the edge nodes caching its file (the origin is always added).
    """
    topo = simple_topology(
        [(a, b, c * MBPS) for a, b, c in wired],
        wireless,
        bandwidth_mhz * MBPS,
    )
    q = QualityLadder(tuple(r * MBPS for r, _ in ladder), tuple(s for _, s in ladder))
    users = [n.id for n in topo.users]
    nodes = ["origin"] + [n.id for n in topo.nodes if n.kind in ("gateway", "macro-bs", "small-bs")]
    status = np.zeros((len(users), len(nodes)), dtype=bool)
    for i, u in enumerate(users):
        for j, n in enumerate(nodes):
            status[i, j] = n == "origin" or n in hits.get(u, ())
    hm = HitMatrix(tuple(users), tuple(nodes), status, q.top_rate, q)
    comp = ComputeModel(
        {n: (compute_mbps or {}).get(n, 0.0) * MBPS for n in nodes},
        {u: task_cost_mbps * MBPS for u in users},
    )
    return make_instance(topo, q, hm, comp, k_max=k_max)


def random_small_instance(seed: int, max_users: int = 4, max_levels: int = 3) -> Instance:
    """Random instance inside the exhaustive-solver limits.

    Up to three network nodes (GW, MBS and optionally an SBS reachable over
    one or two backhaul routes), 1..max_users users each heard by one or two
    base stations, a 2..max_levels ladder, random caches and budgets.
    """
    rng = np.random.default_rng(seed)
    n_users = int(rng.integers(1, max_users + 1))
    Q = int(rng.integers(2, max_levels + 1))
    rates = np.cumsum(np.concatenate([[rng.choice([0.5, 1.0, 1.5])],
                                      rng.choice([1.0, 2.0, 3.0, 4.0], size=Q - 1)]))
    scores = np.cumsum(rng.uniform(0.5, 1.5, size=Q))
    with_sbs = bool(rng.random() < 0.75)

    wired = [("origin", "gw0", float(rng.uniform(20, 60))),
             ("gw0", "mbs0", float(rng.uniform(3, 25)))]
    bss = ["mbs0"]
    if with_sbs:
        wired.append(("mbs0", "sbs0", float(rng.uniform(2, 15))))
        if rng.random() < 0.5:
            wired.append(("gw0", "sbs0", float(rng.uniform(2, 15))))
        bss.append("sbs0")
    wireless = []
    users = [f"u{i}" for i in range(n_users)]
    for u in users:
        heard = [bs for bs in bss if rng.random() < 0.7] or [bss[int(rng.integers(len(bss)))]]
        for bs in heard:
            wireless.append((bs, u, float(rng.uniform(1.0, 8.0))))
    edge = ["gw0"] + bss
    hits = {u: [n for n in edge if rng.random() < 0.45] for u in users}
    cost = float(rng.choice([1.0, 2.0, 3.0]))
    compute = {n: cost * int(rng.integers(0, 3)) for n in edge}
    bandwidth = float(rng.uniform(1.5, 6.0))
    return toy_instance(wired, wireless, bandwidth, list(zip(rates, scores)), hits,
                        compute, task_cost_mbps=cost, k_max=MAX_PATHS_PER_SOURCE)
