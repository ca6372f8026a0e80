"""HetNet topology, radio model and candidate path sets."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import load_config

logger = logging.getLogger(__name__)

NODE_KINDS = ("origin", "gateway", "macro-bs", "small-bs", "user")
TRANSMITTERS = ("macro-bs", "small-bs")


class TopologyError(ValueError):
    """Raised when a topology cannot be generated or is inconsistent."""


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def pathloss_db(distance):
    """Log-distance pathloss ``34 + 40 log10(d)`` in dB, ``d`` in meters."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 1.0):
        raise ValueError("pathloss model is only valid for distance >= 1 m")
    out = 34.0 + 40.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def spectral_efficiency(gain, tx_psd, noise_psd):
    """Shannon spectral efficiency ``log2(1 + g p / N0)`` in bits/s/Hz.

    ``tx_psd`` and ``noise_psd`` are linear power spectral densities (W/Hz).
    """
    g = np.asarray(gain, dtype=float)
    if np.any(g < 0):
        raise ValueError("channel gain must be non-negative")
    if tx_psd <= 0 or noise_psd <= 0:
        raise ValueError("power spectral densities must be positive")
    out = np.log2(1.0 + g * tx_psd / noise_psd)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    position: tuple[float, float]
    tx_power_total: float | None = None  # dBm

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise TopologyError(f"unknown node kind {self.kind!r}")
        if self.kind == "user" and self.tx_power_total is not None:
            raise TopologyError("user nodes never transmit")


@dataclass(frozen=True)
class LinkSpec:
    id: int
    source: str
    dest: str
    kind: str
    wired_capacity: float | None = None  # bits/s
    channel_gain: float | None = None  # linear
    spectral_efficiency: float | None = None  # bits/s/Hz

    def __post_init__(self):
        if self.kind == "wired":
            if self.wired_capacity is None or self.wired_capacity <= 0:
                raise TopologyError(f"wired link {self.id} needs positive capacity")
        elif self.kind == "wireless":
            if self.spectral_efficiency is None or self.spectral_efficiency <= 0:
                raise TopologyError(f"wireless link {self.id} has no usable spectral efficiency")
        else:
            raise TopologyError(f"unknown link kind {self.kind!r}")


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    spectrum_bandwidth: float  # Hz
    noise_psd: float  # dBm/Hz
    rng_seed: int | None = None
    area_m: float | None = None
    _node_index: dict = field(init=False, repr=False, compare=False)
    _out_links: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.spectrum_bandwidth <= 0:
            raise TopologyError("spectrum bandwidth must be positive")
        index = {n.id: n for n in self.nodes}
        if len(index) != len(self.nodes):
            raise TopologyError("duplicate node ids")
        origins = [n for n in self.nodes if n.kind == "origin"]
        if len(origins) != 1:
            raise TopologyError("exactly one origin node is required")
        out: dict[str, list[LinkSpec]] = {n.id: [] for n in self.nodes}
        for i, link in enumerate(self.links):
            if link.id != i:
                raise TopologyError("link ids must equal their position in the link list")
            if link.source not in index or link.dest not in index:
                raise TopologyError(f"link {link.id} references an unknown node")
            if index[link.source].kind == "user":
                raise TopologyError("user nodes never transmit")
            if link.kind == "wireless" and index[link.dest].kind != "user":
                raise TopologyError("wireless links must terminate at a user")
            out[link.source].append(link)
        origin_links = out[origins[0].id]
        if not origin_links or any(index[l.dest].kind != "gateway" for l in origin_links):
            raise TopologyError("the origin must attach to a gateway")
        object.__setattr__(self, "_node_index", index)
        object.__setattr__(self, "_out_links", out)

    def node(self, node_id: str) -> NodeSpec:
        return self._node_index[node_id]

    def out_links(self, node_id: str) -> list[LinkSpec]:
        return self._out_links[node_id]

    def nodes_of(self, *kinds: str) -> list[NodeSpec]:
        return [n for n in self.nodes if n.kind in kinds]

    @property
    def origin(self) -> NodeSpec:
        return self.nodes_of("origin")[0]

    @property
    def users(self) -> list[NodeSpec]:
        return self.nodes_of("user")

    @property
    def wired_links(self) -> list[LinkSpec]:
        return [l for l in self.links if l.kind == "wired"]

    @property
    def wireless_links(self) -> list[LinkSpec]:
        return [l for l in self.links if l.kind == "wireless"]

    def link_rate_capacity(self, link_id: int) -> float:
        """Rate of a wireless link if it held the whole spectrum (bits/s)."""
        link = self.links[link_id]
        if link.kind != "wireless":
            return link.wired_capacity
        return self.spectrum_bandwidth * link.spectral_efficiency

    def to_dict(self) -> dict:
        return {
            "nodes": [asdict(n) for n in self.nodes],
            "links": [asdict(l) for l in self.links],
            "spectrum_bandwidth": self.spectrum_bandwidth,
            "noise_psd": self.noise_psd,
            "rng_seed": self.rng_seed,
            "area_m": self.area_m,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Topology":
        nodes = tuple(
            NodeSpec(n["id"], n["kind"], tuple(n["position"]), n.get("tx_power_total"))
            for n in doc["nodes"]
        )
        links = tuple(LinkSpec(**l) for l in doc["links"])
        return cls(
            nodes,
            links,
            doc["spectrum_bandwidth"],
            doc["noise_psd"],
            doc.get("rng_seed"),
            doc.get("area_m"),
        )


@dataclass(frozen=True)
class CandidatePath:
    user: str
    source_node: str
    index: int
    link_sequence: tuple[int, ...]

    def incidence(self, n_links: int) -> np.ndarray:
        flags = np.zeros(n_links, dtype=bool)
        flags[list(self.link_sequence)] = True
        return flags


def wireless_link(topology: Topology, tx: NodeSpec, rx: NodeSpec, shadow_db: float,
                  link_id: int) -> LinkSpec:
    """Build the frozen wireless link ``tx -> rx`` for a given shadowing draw."""
    d = max(1.0, math.dist(tx.position, rx.position))
    gain = 10.0 ** (-(pathloss_db(d) + shadow_db) / 10.0)
    psd = float(dbm_to_watt(tx.tx_power_total)) / topology.spectrum_bandwidth
    noise = float(dbm_to_watt(topology.noise_psd))
    gamma = spectral_efficiency(gain, psd, noise)
    return LinkSpec(link_id, tx.id, rx.id, "wireless", channel_gain=gain,
                    spectral_efficiency=gamma)


def build_hetnet(config: Mapping | None = None, seed: int | None = None) -> Topology:
    """Generate a random single-gateway HetNet.

    The MBS sits at the area center, SBSs and users are dropped uniformly.
    Backhaul is a tree: origin -> GW -> MBS -> SBS. Each user gets wireless
    links from its ``attach_m`` strongest-gain base stations; shadowing is
    drawn once per (BS, user) pair.
    """
    cfg = load_config(config)
    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    area = float(cfg["area_m"])
    counts = cfg["counts"]
    bw = float(cfg["bandwidth_hz"])
    backhaul = cfg["backhaul_mbps"]

    centre = (area / 2.0, area / 2.0)
    nodes = [NodeSpec("origin", "origin", centre), NodeSpec("gw0", "gateway", centre)]
    mbs = []
    for m in range(counts["mbs"]):
        pos = centre if m == 0 else tuple(float(v) for v in rng.uniform(0, area, 2))
        mbs.append(NodeSpec(f"mbs{m}", "macro-bs", pos, float(cfg["power_dbm"]["mbs"])))
    sbs = [
        NodeSpec(f"sbs{s}", "small-bs", tuple(float(v) for v in rng.uniform(0, area, 2)),
                 float(cfg["power_dbm"]["sbs"]))
        for s in range(counts["sbs"])
    ]
    users = [
        NodeSpec(f"u{u}", "user", tuple(float(v) for v in rng.uniform(0, area, 2)))
        for u in range(counts["users"])
    ]
    nodes += mbs + sbs + users

    links: list[LinkSpec] = []

    def wired(src: str, dst: str, mbps: float):
        links.append(LinkSpec(len(links), src, dst, "wired", wired_capacity=mbps * 1e6))

    wired("origin", "gw0", backhaul["origin_gw"])
    for m in mbs:
        wired("gw0", m.id, backhaul["mbs_gw"])
    for s in sbs:
        if mbs:
            parent = min(mbs, key=lambda m: math.dist(m.position, s.position))
            wired(parent.id, s.id, backhaul["sbs_mbs"])
        else:
            wired("gw0", s.id, backhaul["sbs_mbs"])

    # skeleton used only to evaluate candidate wireless links
    skeleton = Topology(tuple(nodes), tuple(links), bw, float(cfg["noise_dbm_hz"]))
    bss = mbs + sbs
    shadow = rng.normal(0.0, cfg["shadowing_db"], size=(len(users), len(bss)))
    attach = int(cfg["attach_m"])
    for ui, user in enumerate(users):
        cands = [wireless_link(skeleton, bs, user, shadow[ui, bi], -1)
                 for bi, bs in enumerate(bss)]
        order = sorted(range(len(bss)), key=lambda b: (-cands[b].channel_gain, b))
        chosen = [b for b in order[:attach] if cands[b].spectral_efficiency > 0]
        if not chosen:
            raise TopologyError(f"user {user.id} has no candidate base station")
        for b in sorted(chosen):
            c = cands[b]
            links.append(LinkSpec(len(links), c.source, c.dest, "wireless",
                                  channel_gain=c.channel_gain,
                                  spectral_efficiency=c.spectral_efficiency))

    return Topology(tuple(nodes), tuple(links), bw, float(cfg["noise_dbm_hz"]), seed, area)


def enumerate_paths(topology: Topology, user: str, source_nodes: Iterable[str],
                    k_max: int = 3, diagnostics: list | None = None) -> list[CandidatePath]:
    """Up to ``k_max`` loop-free paths from each source to ``user``.

    Paths are ranked by hop count, ties broken by the lexicographic order of
    their link-id sequences. Unreachable sources contribute nothing and are
    appended to ``diagnostics`` when given.
    """
    sources = list(source_nodes)
    if not sources:
        raise ValueError("source_nodes must be non-empty")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    paths: list[CandidatePath] = []
    for src in sources:
        found = _k_shortest(topology, src, user, k_max)
        if not found:
            logger.debug("source %s cannot reach %s", src, user)
            if diagnostics is not None:
                diagnostics.append((user, src))
        for k, seq in enumerate(found):
            paths.append(CandidatePath(user, src, k, seq))
    return paths


def _k_shortest(topology: Topology, src: str, dst: str, k: int) -> list[tuple[int, ...]]:
    # uniform-cost search over simple paths keyed by (hops, link ids); every
    # extension strictly increases the key, so complete paths pop in order
    heap: list[tuple[int, tuple[int, ...], str, frozenset]] = [(0, (), src, frozenset([src]))]
    out: list[tuple[int, ...]] = []
    while heap and len(out) < k:
        hops, seq, node, seen = heapq.heappop(heap)
        if node == dst and seq:
            if topology.links[seq[-1]].kind == "wireless":
                out.append(seq)
            continue
        for link in topology.out_links(node):
            if link.dest in seen:
                continue
            dest_kind = topology.node(link.dest).kind
            if dest_kind == "user" and link.dest != dst:
                continue
            heapq.heappush(heap, (hops + 1, seq + (link.id,), link.dest, seen | {link.dest}))
    return out


def check_path(topology: Topology, path: CandidatePath) -> None:
    """Raise if ``path`` is not a connected, loop-free source->user route."""
    seq = path.link_sequence
    if not seq:
        raise TopologyError("empty path")
    at = path.source_node
    visited = {at}
    for lid in seq:
        link = topology.links[lid]
        if link.source != at:
            raise TopologyError(f"path breaks at link {lid}")
        at = link.dest
        if at in visited:
            raise TopologyError("path revisits a node")
        visited.add(at)
    if at != path.user:
        raise TopologyError("path does not end at its user")
    if topology.links[seq[-1]].kind != "wireless":
        raise TopologyError("last hop must be wireless")


def reachable(topology: Topology, src: str, dst: str) -> bool:
    return bool(_k_shortest(topology, src, dst, 1))


def users_reachable_from_origin(topology: Topology) -> bool:
    return all(reachable(topology, topology.origin.id, u.id) for u in topology.users)


def simple_topology(
    wired: Sequence[tuple[str, str, float]],
    wireless: Sequence[tuple[str, str, float]],
    bandwidth_hz: float,
    kinds: Mapping[str, str] | None = None,
) -> Topology:
    """Hand-built topology from edge lists.

    ``wired`` holds (src, dst, bits/s) and ``wireless`` holds (bs, user,
    spectral efficiency). Node kinds are inferred from names unless given:
    ``origin``, ``gw*``, ``mbs*``, ``sbs*``, anything else is a user.
    """
    kinds = dict(kinds or {})

    def kind_of(name: str) -> str:
        if name in kinds:
            return kinds[name]
        if name == "origin":
            return "origin"
        for prefix, kind in (("gw", "gateway"), ("mbs", "macro-bs"), ("sbs", "small-bs")):
            if name.startswith(prefix):
                return kind
        return "user"

    names: list[str] = []
    for a, b, _ in list(wired) + list(wireless):
        for n in (a, b):
            if n not in names:
                names.append(n)
    nodes = []
    for n in names:
        k = kind_of(n)
        power = 30.0 if k in TRANSMITTERS else None
        nodes.append(NodeSpec(n, k, (0.0, 0.0), power))
    links = [LinkSpec(i, a, b, "wired", wired_capacity=float(c)) for i, (a, b, c) in enumerate(wired)]
    for a, b, gamma in wireless:
        links.append(LinkSpec(len(links), a, b, "wireless", spectral_efficiency=float(gamma)))
    return Topology(tuple(nodes), tuple(links), float(bandwidth_hz), -174.0)
