"""Video library, popularity, cache placement and the compute-cost model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

HIT = True
MISS = False


@dataclass(frozen=True)
class QualityLadder:
    """Discrete quality levels 1..Q with minimum bitrates (bits/s) and scores."""

    rates: tuple[float, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if not self.rates or len(self.rates) != len(self.scores):
            raise ValueError("ladder needs matching, non-empty rates and scores")
        if self.rates[0] <= 0 or any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            raise ValueError("rates must be positive and strictly increasing")
        if any(b <= a for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be strictly increasing")

    @property
    def Q(self) -> int:
        return len(self.rates)

    @property
    def top_rate(self) -> float:
        return self.rates[-1]

    def rate(self, q: int) -> float:
        """Bitrate of the 1-based level ``q``."""
        return self.rates[q - 1]

    def score(self, q: int) -> float:
        return self.scores[q - 1]

    @classmethod
    def from_config(cls, ladder: Sequence[Mapping]) -> "QualityLadder":
        levels = sorted(ladder, key=lambda lvl: lvl["q"])
        return cls(tuple(float(l["v_mbps"]) * 1e6 for l in levels),
                   tuple(float(l["score"]) for l in levels))


@dataclass(frozen=True)
class VideoLibrary:
    file_count: int
    zipf_exponent: float
    ladder: QualityLadder
    duration_s: float = 600.0

    def __post_init__(self):
        if self.file_count < 1:
            raise ValueError("library must hold at least one file")

    def pmf(self) -> np.ndarray:
        return zipf_pmf(self.file_count, self.zipf_exponent)


@dataclass(frozen=True)
class CacheState:
    """Per-node cached file ids (1-based popularity ranks) and capacities."""

    files: Mapping[str, frozenset]
    capacity: Mapping[str, int]

    def __post_init__(self):
        for node, cached in self.files.items():
            if len(cached) > self.capacity.get(node, 0):
                raise ValueError(f"cache at {node} exceeds its capacity")

    def holds(self, node: str, file_id: int) -> bool:
        return file_id in self.files.get(node, frozenset())


@dataclass(frozen=True)
class HitMatrix:
    """Cache hit status per (user, node).

    Misses are stored as ``False`` rather than an infinite cost; a miss means
    node ``j`` may not carry any of flow ``i``.
    """

    users: tuple[str, ...]
    nodes: tuple[str, ...]
    status: np.ndarray  # (users, nodes) bool
    full_rate: float  # bits/s a hitting node can deliver (top level)
    ladder: QualityLadder = field(repr=False)

    def hit(self, user: str, node: str) -> bool:
        return bool(self.status[self.users.index(user), self.nodes.index(node)])

    def deliverable_rate(self, user: str, node: str, q: int) -> float:
        return self.ladder.rate(q) if self.hit(user, node) else 0.0

    def full(self, user: str, node: str) -> float:
        return self.full_rate if self.hit(user, node) else 0.0

    def hit_sources(self, user: str) -> list[str]:
        row = self.status[self.users.index(user)]
        return [n for n, h in zip(self.nodes, row) if h]


@dataclass(frozen=True)
class ComputeModel:
    """Transcoding budgets C_j and per-flow costs c_i, both in bits/s."""

    capacity: Mapping[str, float]
    cost: Mapping[str, float]
    exempt: frozenset = frozenset({"origin"})

    def __post_init__(self):
        if any(c < 0 for c in self.capacity.values()):
            raise ValueError("compute capacity must be non-negative")
        if any(c <= 0 for c in self.cost.values()):
            raise ValueError("task cost must be positive")


def zipf_pmf(file_count: int, exponent: float) -> np.ndarray:
    """Request probability of each popularity rank 1..file_count."""
    if file_count < 1:
        raise ValueError("file_count must be >= 1")
    if exponent < 0:
        raise ValueError("exponent must be >= 0")
    w = np.arange(1, file_count + 1, dtype=float) ** -float(exponent)
    return w / w.sum()


def lfu_place(library: VideoLibrary, capacity: int) -> frozenset:
    """Cache the ``capacity`` most popular files (ranks 1..capacity)."""
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    return frozenset(range(1, min(int(capacity), library.file_count) + 1))


def analytic_hit_rate(library: VideoLibrary, capacity: int) -> float:
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    pmf = library.pmf()
    return float(np.sum(pmf[: min(int(capacity), library.file_count)]))


def hit_matrix(requests: Mapping[str, int], caches: CacheState, ladder: QualityLadder,
               nodes: Sequence[str], origin: str = "origin",
               file_count: int | None = None) -> HitMatrix:
    """Hit/miss for every (user, node); the origin always hits."""
    users = tuple(requests)
    status = np.zeros((len(users), len(nodes)), dtype=bool)
    for i, u in enumerate(users):
        f = requests[u]
        if f < 1 or (file_count is not None and f > file_count):
            raise ValueError(f"request of {u} references unknown file {f}")
        for j, n in enumerate(nodes):
            status[i, j] = n == origin or caches.holds(n, f)
    return HitMatrix(users, tuple(nodes), status, ladder.top_rate, ladder)


def sample_requests(pmf, user_count: int, seed: int | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """One i.i.d. file rank (1-based) per user."""
    p = np.asarray(pmf, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("pmf must be a probability vector")
    rng = np.random.default_rng(seed) if rng is None else rng
    return rng.choice(p.size, size=user_count, p=p) + 1
