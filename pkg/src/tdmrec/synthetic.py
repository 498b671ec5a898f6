"""Synthetic CDR city standing in for proprietary operator data.

The generator lays out a hub ("hotel district") connected to attraction
nodes by two-way roads, plus a slower ring road between attractions.
Tourists hold low-rank ground-truth preferences skewed towards a few
popular attractions and leave for them around a morning peak, which
overloads the busiest spokes when everyone follows their own preference.
Residents add background traffic.  All randomness comes from one seed.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .demand import TrafficCount, write_counts
from .ingest import CdrRecord, Tower, format_timestamp, write_cdr, write_towers
from .network import RoadLink, RoadNetwork, write_network

EPOCH0 = datetime(2015, 5, 4, tzinfo=timezone.utc).timestamp()


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int = 6
    n_travelers: int = 1000
    n_residents: int = 400
    rank: int = 3
    noise: float = 0.1
    seed: int = 0
    towers_per_node: int = 2
    days: int = 5
    peak_hour: int = 10
    slots: tuple[int, ...] = (9, 10, 11)
    spoke_capacity: float = 260.0
    spoke_free_flow: float = 12.0
    ring_capacity: float = 200.0
    ring_free_flow: float = 30.0
    true_scale: float = 3.0
    home_country: str = "AD"

    def validate(self):
        problems = []
        if self.n_travelers < 1:
            problems.append("n_travelers must be >= 1")
        if self.n_nodes < 3:
            problems.append("n_nodes must be >= 3 (hub plus two attractions)")
        if self.rank < 1:
            problems.append("rank must be >= 1")
        if self.towers_per_node < 1:
            problems.append("towers_per_node must be >= 1")
        if self.days < 1:
            problems.append("days must be >= 1")
        if self.peak_hour not in self.slots:
            problems.append("peak_hour must be one of slots")
        if self.noise < 0:
            problems.append("noise must be >= 0")
        if problems:
            raise ValueError("invalid synthetic spec: " + "; ".join(problems))


@dataclass
class Dataset:
    spec: SyntheticSpec
    records: list[CdrRecord]
    towers: dict[str, Tower]
    network: RoadNetwork
    counts: list[TrafficCount]
    true_preferences: np.ndarray
    tourist_ids: list[str]
    attractions: list[str]
    hub: str
    true_od: dict[tuple[int, str, str], int] = field(default_factory=dict)

    def write(self, out_dir) -> dict[str, str]:
        """Write every table into ``out_dir``; returns file name -> path."""
        os.makedirs(out_dir, exist_ok=True)
        files = {
            "cdr.csv": write_cdr(self.records),
            "towers.csv": write_towers(self.towers.values()),
            "counts.csv": write_counts(self.counts),
            "truth_preferences.csv": self._truth_prefs_csv(),
            "truth_od.csv": self._truth_od_csv(),
        }
        files.update(write_network(self.network))
        paths = {}
        for name, text in files.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
            paths[name] = path
        return paths

    def _truth_prefs_csv(self):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("user_id", "location", "preference"))
        for u, uid in enumerate(self.tourist_ids):
            for j, loc in enumerate(self.attractions):
                w.writerow((uid, loc, repr(float(self.true_preferences[u, j]))))
        return buf.getvalue()

    def _truth_od_csv(self):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("time_bin", "origin", "destination", "trips"))
        for (t, o, d), n in sorted(self.true_od.items()):
            w.writerow((t, o, d, n))
        return buf.getvalue()


def build_network(spec: SyntheticSpec) -> RoadNetwork:
    hub = "N0"
    attractions = [f"N{i}" for i in range(1, spec.n_nodes)]
    nodes = {hub: "hub"}
    nodes.update({a: f"attraction {a[1:]}" for a in attractions})
    links = []
    for a in attractions:
        for lid, frm, to in ((f"S{a[1:]}+", hub, a), (f"S{a[1:]}-", a, hub)):
            links.append(RoadLink(lid, frm, to, 2, spec.spoke_capacity, spec.spoke_free_flow, 8.0))
    for i, a in enumerate(attractions):
        b = attractions[(i + 1) % len(attractions)]
        if len(attractions) == 2 and i == 1:
            break
        links.append(RoadLink(f"R{a[1:]}+", a, b, 1, spec.ring_capacity, spec.ring_free_flow, 15.0))
        links.append(RoadLink(f"R{a[1:]}-", b, a, 1, spec.ring_capacity, spec.ring_free_flow, 15.0))
    towers = {f"T{n[1:]}_{k}": n for n in nodes for k in range(spec.towers_per_node)}
    return RoadNetwork(nodes, links, towers)


def _towers(spec, network, rng) -> dict[str, Tower]:
    out = {}
    n_att = spec.n_nodes - 1
    for tid, node in network.node_of_tower.items():
        i = int(node[1:])
        if i == 0:
            lat, lon = 42.5078, 1.5211
        else:
            ang = 2 * np.pi * (i - 1) / n_att
            lat, lon = 42.5078 + 0.05 * float(np.sin(ang)), 1.5211 + 0.07 * float(np.cos(ang))
        lat += float(rng.uniform(-0.002, 0.002))
        lon += float(rng.uniform(-0.002, 0.002))
        out[tid] = Tower(tid, round(lat, 6), round(lon, 6), f"city{i}", node)
    return out


def generate(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Generate CDR, towers, network, counts and ground truth for ``spec``."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    s_net, s_pref, s_tour, s_res, s_count = (np.random.default_rng(s) for s in root.spawn(5))

    network = build_network(spec)
    towers = _towers(spec, network, s_net)
    hub = "N0"
    attractions = [n for n in network.nodes if n != hub]
    towers_of = {}
    for tid, node in network.node_of_tower.items():
        towers_of.setdefault(node, []).append(tid)

    # low-rank non-negative preferences, skewed by attraction popularity
    m = len(attractions)
    popularity = np.linspace(1.6, 0.5, m)
    U = s_pref.gamma(2.0, 0.5, size=(spec.n_travelers, spec.rank))
    L = s_pref.gamma(2.0, 0.5, size=(m, spec.rank)) * popularity[:, None]
    truth = U @ L.T
    truth /= truth.mean()

    records: list[CdrRecord] = []
    od: dict[tuple[int, str, str], int] = {}
    tourist_ids = [f"t{u:05d}" for u in range(spec.n_travelers)]
    nationalities = ("FR", "ES")
    slot_p = np.full(len(spec.slots), 0.2 / max(len(spec.slots) - 1, 1))
    slot_p[spec.slots.index(spec.peak_hour)] = 0.8 if len(spec.slots) > 1 else 1.0

    last_tower: dict[str, str] = {}

    def stay(user, node, t, nat, rng):
        # one visit event: 1-3 calls at a single tower within 20 minutes of t;
        # a repeated stay at the same node switches tower so it is not merged
        choices = [x for x in towers_of[node] if x != last_tower.get(user)] or towers_of[node]
        tower = choices[int(rng.integers(len(choices)))]
        last_tower[user] = tower
        first = None
        for k in range(int(rng.integers(1, 4))):
            start = t + 300.0 * k + float(rng.integers(0, 240))
            first = start if first is None else first
            records.append(CdrRecord(user, start, start + float(rng.integers(10, 50)), tower, nat, "synthetic"))
        return first

    def day_trip(user, origin, dest, t_out, t_home, nat, rng):
        # origin stay at t_out, destination stay 45 min later, home again at t_home
        left = stay(user, origin, t_out, nat, rng)
        arrived = stay(user, dest, t_out + 2700.0, nat, rng)
        stay(user, origin, t_home, nat, rng)
        for key in ((int(left // 3600 % 24), origin, dest),
                    (int(arrived // 3600 % 24), dest, origin)):
            od[key] = od.get(key, 0) + 1

    def in_hour(day0, hour, rng):
        return day0 + hour * 3600.0 + float(rng.integers(0, 35 * 60))

    for u, uid in enumerate(tourist_ids):
        nat = nationalities[u % 2]
        origin = hub if s_tour.random() < 0.8 else attractions[int(s_tour.integers(m))]
        hour = spec.slots[int(s_tour.choice(len(spec.slots), p=slot_p))]
        weights = truth[u] * np.exp(spec.noise * s_tour.normal(size=m))
        if origin != hub:
            weights[attractions.index(origin)] = 0.0
        weights = weights ** 2
        weights /= weights.sum()
        for d in range(spec.days):
            day0 = EPOCH0 + 86400.0 * d
            dest = attractions[int(s_tour.choice(m, p=weights))]
            day_trip(uid, origin, dest, in_hour(day0, hour, s_tour),
                     in_hour(day0, int(s_tour.integers(17, 21)), s_tour), nat, s_tour)

    all_nodes = list(network.nodes)
    for r in range(spec.n_residents):
        uid = f"r{r:05d}"
        home = all_nodes[int(s_res.integers(len(all_nodes)))]
        work = all_nodes[int(s_res.integers(len(all_nodes)))]
        if work == home:
            work = all_nodes[(all_nodes.index(home) + 1) % len(all_nodes)]
        for d in range(spec.days):
            day0 = EPOCH0 + 86400.0 * d
            hour = int(np.clip(round(spec.peak_hour + s_res.normal(0, 0.7)), 7, 13))
            day_trip(uid, home, work, in_hour(day0, hour, s_res), in_hour(day0, 19, s_res),
                     spec.home_country, s_res)

    # traffic counts on spokes: observed CDR trips scaled by a fixed phone share
    flows: dict[tuple[str, int], float] = {}
    for (t, o, d), n in od.items():
        for lid in network.route(o, d):
            flows[(lid, t)] = flows.get((lid, t), 0.0) + n
    counts = []
    for (lid, t), n in sorted(flows.items()):
        if lid.startswith("S") and t in spec.slots:
            factor = spec.true_scale * float(np.exp(0.05 * s_count.normal())) / spec.days
            counts.append(TrafficCount(lid, t, round(n * factor, 3)))

    records.sort(key=lambda r: (r.start_time, r.user_id, r.tower_id))
    return Dataset(spec, records, towers, network, counts, truth, tourist_ids, attractions, hub, od)


def spec_from_dict(doc: dict) -> SyntheticSpec:
    fields = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(doc) - fields
    if unknown:
        raise ValueError(f"unknown synthetic spec field(s): {', '.join(sorted(unknown))}")
    doc = dict(doc)
    if "slots" in doc:
        doc["slots"] = tuple(doc["slots"])
    return SyntheticSpec(**doc)


def spec_to_dict(spec: SyntheticSpec) -> dict:
    d = asdict(spec)
    d["slots"] = list(spec.slots)
    return d


__all__ = ["Dataset", "SyntheticSpec", "build_network", "format_timestamp", "generate",
           "spec_from_dict", "spec_to_dict"]
