"""Synchronous network rounds over random peer topologies.

Topologies are undirected adjacency matrices: each pair joins with the target
density, then isolated nodes are repaired with one random edge. Delivery is
one-hop broadcast; DFAST-style blind flooding relays every newly seen payload
to all neighbors once. Packets count delivered edge-directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .kcif import NeighborMessage, message_num_bytes

__all__ = [
    "generate_topology",
    "graph_density",
    "degrees",
    "is_connected",
    "TopologySchedule",
    "CommStats",
    "deliver_one_hop",
    "flood_reachability",
    "flood_broadcast",
]


def generate_topology(m: int, density: float, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric adjacency with no self-loops and no isolated nodes.

    Each unordered pair is linked with probability `density`; any node left
    isolated gains one edge to a uniformly random other node.
    """
    if m < 2:
        raise ValueError(f"need at least two nodes, got m={m}")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    upper = rng.random((m, m)) < density
    adj = np.triu(upper, k=1)
    adj = adj | adj.T
    for i in range(m):
        if not adj[i].any():
            j = int(rng.integers(0, m - 1))
            if j >= i:
                j += 1
            adj[i, j] = adj[j, i] = True
    return adj


def graph_density(adj: np.ndarray) -> float:
    """2 * edges / (m * (m - 1))."""
    m = adj.shape[0]
    if m < 2:
        return 0.0
    return float(adj.sum()) / (m * (m - 1))


def degrees(adj: np.ndarray) -> np.ndarray:
    return adj.sum(axis=1).astype(np.int64)


def is_connected(adj: np.ndarray) -> bool:
    m = adj.shape[0]
    reached = np.zeros(m, dtype=bool)
    reached[0] = True
    frontier = reached.copy()
    while frontier.any():
        frontier = (adj[frontier].any(axis=0)) & ~reached
        reached |= frontier
    return bool(reached.all())


@dataclass
class TopologySchedule:
    """Deterministic adjacency per timestamp.

    Static by default (one draw reused all run); dynamic mode regenerates the
    graph each timestamp from a per-timestamp child seed, so any t can be
    re-derived independently of iteration order.
    """

    m: int
    density: float
    seed: int
    dynamic: bool = False
    _static: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"need at least one node, got m={self.m}")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.density}")

    def adjacency_at(self, t: int) -> np.ndarray:
        if self.m == 1:
            return np.zeros((1, 1), dtype=bool)  # a lone server has no peers
        if not self.dynamic:
            if self._static is None:
                rng = np.random.default_rng(np.random.SeedSequence(self.seed))
                self._static = generate_topology(self.m, self.density, rng)
            return self._static
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, int(t))))
        return generate_topology(self.m, self.density, rng)


@dataclass
class CommStats:
    """Run-level communication accounting."""

    packets: int = 0
    payload_bytes: int = 0
    max_latency_ms: float = 0.0
    broadcasts: np.ndarray | None = None
    packets_by_t: list = field(default_factory=list)

    def record_round(self, packets: int, payload_bytes: int, latency_ms: float) -> None:
        self.packets += int(packets)
        self.payload_bytes += int(payload_bytes)
        self.max_latency_ms = max(self.max_latency_ms, float(latency_ms))
        self.packets_by_t.append(int(packets))


def _delivery_latency(count: int, rng: np.random.Generator | None, center: float) -> float:
    """Max over per-delivery latencies, uniform within +/-20% of the center."""
    if count == 0:
        return 0.0
    if rng is None:
        return center
    return float(rng.uniform(0.8 * center, 1.2 * center, size=count).max())


def deliver_one_hop(
    messages: Mapping[int, NeighborMessage],
    adj: np.ndarray,
    stats: CommStats | None = None,
    rng: np.random.Generator | None = None,
    latency_center: float = 100.0,
) -> dict[int, list[NeighborMessage]]:
    """Deliver each broadcast to the sender's neighbors; returns inboxes.

    Inboxes are ordered by sender id, so downstream fusion is deterministic.
    """
    m = adj.shape[0]
    inboxes: dict[int, list[NeighborMessage]] = {i: [] for i in range(m)}
    packets = 0
    payload = 0
    for sender in sorted(messages):
        msg = messages[sender]
        if not 0 <= sender < m:
            raise KeyError(f"sender {sender} outside topology of {m} nodes")
        for receiver in np.flatnonzero(adj[sender]):
            inboxes[int(receiver)].append(msg)
            packets += 1
            payload += message_num_bytes(msg.d)
    if stats is not None:
        stats.record_round(packets, payload, _delivery_latency(packets, rng, latency_center))
    return inboxes


def flood_reachability(
    adj: np.ndarray, origins: np.ndarray | None = None
) -> tuple[np.ndarray, int, int, list[int]]:
    """Blind-flood each origin's payload; returns (known, hops, packets, per-round forwards).

    known[i, p] marks that node i holds payload p after flooding completes.
    Each node forwards each newly seen payload (its own included) to all its
    neighbors exactly once; packets count every forward over every edge
    direction. hops is the last round in which any node learned something.
    """
    m = adj.shape[0]
    deg = degrees(adj)
    known = np.eye(m, dtype=bool)
    if origins is not None:
        known &= np.asarray(origins, dtype=bool)[None, :]  # drop absent payload columns
    new = known.copy()
    packets = 0
    hops = 0
    rounds: list[int] = []
    round_no = 0
    while new.any():
        round_no += 1
        forwards = int((deg * new.sum(axis=1)).sum())
        packets += forwards
        rounds.append(forwards)
        received = (adj.astype(np.int64) @ new.astype(np.int64)) > 0
        new = received & ~known
        if new.any():
            hops = round_no
            known |= new
    return known, hops, packets, rounds


def flood_broadcast(
    payloads: Mapping[int, object], adj: np.ndarray
) -> tuple[dict[int, dict[int, object]], int, int]:
    """Flood arbitrary payloads; returns (per-node payload maps, hops, packets)."""
    m = adj.shape[0]
    for origin in payloads:
        if not 0 <= origin < m:
            raise KeyError(f"origin {origin} outside topology of {m} nodes")
    origins = np.zeros(m, dtype=bool)
    for origin in payloads:
        origins[origin] = True
    known, hops, packets, _ = flood_reachability(adj, origins)
    delivered: dict[int, dict[int, object]] = {}
    for i in range(m):
        delivered[i] = {int(p): payloads[int(p)] for p in np.flatnonzero(known[i])}
    return delivered, hops, packets
