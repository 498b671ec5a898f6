"""Road graph, free-flow shortest paths and BPR volume-delay evaluation.

Links are directed; a two-way road is two links.  Free-flow times are in
minutes and capacities in vehicles per hour.
"""

from __future__ import annotations

import csv
import heapq
import io
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import NoPathError, RowError, SchemaError

LINK_COLUMNS = ("link_id", "from_node", "to_node", "lanes", "capacity_vph", "free_flow_min", "length_km")


@dataclass(frozen=True)
class BprParams:
    alpha: float = 0.15
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class RoadLink:
    link_id: str
    from_node: str
    to_node: str
    lanes: int
    capacity: float
    free_flow_time: float
    length: float | None = None

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"link {self.link_id}: capacity must be > 0")
        if not self.free_flow_time > 0:
            raise ValueError(f"link {self.link_id}: free_flow_time must be > 0")
        if self.lanes < 1:
            raise ValueError(f"link {self.link_id}: lanes must be >= 1")


def bpr_time(link: RoadLink, volume: float, params: BprParams = BprParams()) -> float:
    """Congested travel time in minutes: ``t_ff * (1 + alpha * (V/C)**beta)``."""
    if volume < 0:
        raise ValueError(f"volume must be non-negative, got {volume}")
    if volume == 0:
        return link.free_flow_time
    return link.free_flow_time * (1.0 + params.alpha * (volume / link.capacity) ** params.beta)


def delay(link: RoadLink, volume: float, params: BprParams = BprParams()) -> float:
    """Congestion delay in minutes over free-flow time (never negative)."""
    if volume < 0:
        raise ValueError(f"volume must be non-negative, got {volume}")
    if volume == 0:
        return 0.0
    return link.free_flow_time * (params.alpha * (volume / link.capacity) ** params.beta)


def bpr_times(free_flow, volume, capacity, params: BprParams = BprParams()):
    """Vectorised :func:`bpr_time` over aligned arrays."""
    volume = np.asarray(volume, dtype=float)
    if np.any(volume < 0):
        raise ValueError("volume must be non-negative")
    return np.asarray(free_flow, dtype=float) * (1.0 + params.alpha * (volume / np.asarray(capacity, dtype=float)) ** params.beta)


def delays(free_flow, volume, capacity, params: BprParams = BprParams()):
    volume = np.asarray(volume, dtype=float)
    if np.any(volume < 0):
        raise ValueError("volume must be non-negative")
    return np.asarray(free_flow, dtype=float) * (params.alpha * (volume / np.asarray(capacity, dtype=float)) ** params.beta)


@dataclass
class RoadNetwork:
    """Directed road graph with an optional tower-to-node mapping."""

    nodes: dict[str, str]
    links: list[RoadLink]
    node_of_tower: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.link_by_id = {}
        self._out: dict[str, list[RoadLink]] = {n: [] for n in self.nodes}
        for link in self.links:
            if link.link_id in self.link_by_id:
                raise ValueError(f"duplicate link_id {link.link_id!r}")
            for n in (link.from_node, link.to_node):
                if n not in self.nodes:
                    raise ValueError(f"link {link.link_id}: unknown node {n!r}")
            self.link_by_id[link.link_id] = link
            self._out[link.from_node].append(link)
        for tower, node in self.node_of_tower.items():
            if node not in self.nodes:
                raise ValueError(f"tower {tower!r} mapped to unknown node {node!r}")
        self._routes: dict[tuple[str, str], tuple[str, ...]] = {}

    @property
    def link_ids(self) -> list[str]:
        return [l.link_id for l in self.links]

    def route(self, origin: str, destination: str) -> tuple[str, ...]:
        """Minimum free-flow-time path as a tuple of link ids.

        Among equal-cost paths the lexicographically smallest link-id
        sequence wins.  Raises :class:`NoPathError` if unreachable.
        """
        key = (origin, destination)
        if key not in self._routes:
            self._routes[key] = self._dijkstra(origin, destination)
        return self._routes[key]

    def path_cost(self, path: Iterable[str]) -> float:
        cost = 0.0
        for lid in path:
            cost += self.link_by_id[lid].free_flow_time
        return cost

    def _dijkstra(self, origin, destination):
        for n in (origin, destination):
            if n not in self.nodes:
                raise KeyError(f"unknown node {n!r}")
        if origin == destination:
            return ()
        best = {origin: (0.0, ())}
        heap = [(0.0, (), origin)]
        done = set()
        while heap:
            cost, path, node = heapq.heappop(heap)
            if node in done:
                continue
            done.add(node)
            if node == destination:
                return path
            for link in self._out[node]:
                nxt = link.to_node
                if nxt in done:
                    continue
                label = (cost + link.free_flow_time, path + (link.link_id,))
                if nxt not in best or label < best[nxt]:
                    best[nxt] = label
                    heapq.heappush(heap, (label[0], label[1], nxt))
        raise NoPathError(f"no path from {origin!r} to {destination!r}")

    def check_connected(self, pairs: Iterable[tuple[str, str]]) -> None:
        for o, d in pairs:
            self.route(o, d)


# -- CSV I/O -----------------------------------------------------------------

def _dict_reader(source, required):
    if isinstance(source, (str, os.PathLike)):
        fh = open(source, newline="", encoding="utf-8")
    else:
        fh = source
    reader = csv.DictReader(fh)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    return fh, reader


def read_links(source) -> list[RoadLink]:
    fh, reader = _dict_reader(source, LINK_COLUMNS[:6])
    links = []
    try:
        for row in reader:
            try:
                length = row.get("length_km")
                links.append(RoadLink(
                    link_id=row["link_id"].strip(),
                    from_node=row["from_node"].strip(),
                    to_node=row["to_node"].strip(),
                    lanes=int(row["lanes"]),
                    capacity=float(row["capacity_vph"]),
                    free_flow_time=float(row["free_flow_min"]),
                    length=float(length) if length not in (None, "") else None,
                ))
            except ValueError as exc:
                raise RowError(reader.line_num, str(exc)) from None
    finally:
        if fh is not source:
            fh.close()
    return links


def read_nodes(source) -> dict[str, str]:
    fh, reader = _dict_reader(source, ("node_id", "name"))
    try:
        return {row["node_id"].strip(): row["name"].strip() for row in reader}
    finally:
        if fh is not source:
            fh.close()


def read_node_towers(source) -> dict[str, str]:
    fh, reader = _dict_reader(source, ("node_id", "tower_id"))
    out = {}
    try:
        for row in reader:
            tid = row["tower_id"].strip()
            if tid in out:
                raise RowError(reader.line_num, f"tower {tid!r} mapped to more than one node")
            out[tid] = row["node_id"].strip()
    finally:
        if fh is not source:
            fh.close()
    return out


def load_network(nodes_csv, links_csv, node_towers_csv=None) -> RoadNetwork:
    towers = read_node_towers(node_towers_csv) if node_towers_csv is not None else {}
    return RoadNetwork(read_nodes(nodes_csv), read_links(links_csv), towers)


def write_network(network: RoadNetwork) -> dict[str, str]:
    """Render ``nodes.csv``, ``links.csv`` and ``node_towers.csv`` as text."""
    out = {}
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("node_id", "name"))
    for n, name in network.nodes.items():
        w.writerow((n, name))
    out["nodes.csv"] = buf.getvalue()

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LINK_COLUMNS)
    for l in network.links:
        w.writerow((l.link_id, l.from_node, l.to_node, l.lanes, repr(float(l.capacity)),
                    repr(float(l.free_flow_time)), "" if l.length is None else repr(float(l.length))))
    out["links.csv"] = buf.getvalue()

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("node_id", "tower_id"))
    for t, n in network.node_of_tower.items():
        w.writerow((n, t))
    out["node_towers.csv"] = buf.getvalue()
    return out


def two_way(link_id: str, a: str, b: str, lanes: int, capacity: float,
            free_flow_time: float, length: float | None = None) -> list[RoadLink]:
    """Convenience: the pair of directed links for a two-way road."""
    return [
        RoadLink(f"{link_id}+", a, b, lanes, capacity, free_flow_time, length),
        RoadLink(f"{link_id}-", b, a, lanes, capacity, free_flow_time, length),
    ]

