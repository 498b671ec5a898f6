"""Hourly O-D extraction, link assignment and count-based flow scaling.

Link flow ``R[i, t]`` is the sum of O-D trips in hour ``t`` whose
free-flow route uses link ``i``.  A per-link factor ``beta[i, t]`` scales it
so that ``R * beta`` reproduces the observed traffic count exactly on
counted links.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import CalibrationError, NoPathError, SchemaError
from .ingest import Trajectory, _open_text
from .network import RoadNetwork

logger = logging.getLogger(__name__)


def hour_of_day(timestamp: float, utc_offset_hours: float = 0.0) -> int:
    return int(((timestamp + utc_offset_hours * 3600.0) // 3600.0) % 24)


@dataclass
class OdMatrix:
    time_bin: int
    entries: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.time_bin < 24:
            raise ValueError(f"time_bin must lie in [0, 24), got {self.time_bin}")
        for pair, n in self.entries.items():
            if n < 0:
                raise ValueError(f"negative trip count for {pair}")

    @property
    def total(self) -> int:
        return sum(self.entries.values())

    def __add__(self, other: "OdMatrix") -> "OdMatrix":
        if other.time_bin != self.time_bin:
            raise ValueError("cannot add O-D matrices of different time bins")
        merged = dict(self.entries)
        for pair, n in other.entries.items():
            merged[pair] = merged.get(pair, 0) + n
        return OdMatrix(self.time_bin, merged)


@dataclass(frozen=True)
class TrafficCount:
    link_id: str
    time_bin: int
    counted_vehicles: float

    def __post_init__(self):
        if self.counted_vehicles < 0:
            raise ValueError("counted_vehicles must be >= 0")


@dataclass(frozen=True)
class LinkFlow:
    link_id: str
    time_bin: int
    cdr_flow: float
    scale_factor: float

    @property
    def vehicle_flow(self) -> float:
        return self.cdr_flow * self.scale_factor


def extract_od(trajectories: Iterable[Trajectory], node_of_tower: Mapping[str, str],
               time_bin: Callable[[float], int] = hour_of_day) -> list[OdMatrix]:
    """Count trips between consecutive visit events at distinct nodes.

    Each trip is binned by the timestamp of its origin visit.  Returns one
    matrix per non-empty bin, in ascending bin order.
    """
    bins: dict[int, dict[tuple[str, str], int]] = defaultdict(dict)
    for traj in trajectories:
        prev_node = prev_t = None
        for tower, ts in traj.visits:
            node = node_of_tower[tower]
            if prev_node is not None and node != prev_node:
                cell = bins[time_bin(prev_t)]
                cell[(prev_node, node)] = cell.get((prev_node, node), 0) + 1
            prev_node, prev_t = node, ts
    return [OdMatrix(b, dict(sorted(bins[b].items()))) for b in sorted(bins)]


def assign_od_to_links(od, network: RoadNetwork,
                       unroutable: list | None = None) -> dict[tuple[str, int], float]:
    """All-or-nothing assignment of O-D trips onto free-flow routes.

    ``od`` may be one :class:`OdMatrix` or an iterable of them.  Pairs
    without a route are skipped and appended to ``unroutable`` as
    ``(time_bin, origin, destination, count)``.  The result is keyed by
    ``(link_id, time_bin)`` in sorted order and only holds used links.
    """
    matrices = [od] if isinstance(od, OdMatrix) else list(od)
    flows: dict[tuple[str, int], float] = defaultdict(float)
    for m in matrices:
        for (o, d), n in m.entries.items():
            try:
                path = network.route(o, d)
            except (NoPathError, KeyError) as exc:
                if unroutable is not None:
                    unroutable.append((m.time_bin, o, d, n))
                else:
                    logger.warning("dropping %d trips %s->%s: %s", n, o, d, exc)
                continue
            for lid in path:
                flows[(lid, m.time_bin)] += n
    return dict(sorted(flows.items()))


def _weighted_beta(pairs):
    num = sum(r * b for r, b in pairs)
    den = sum(r for r, _ in pairs)
    return num / den


def calibrate_scale(cdr_flows: Mapping[tuple[str, int], float], counts: Iterable[TrafficCount],
                    errors: list | None = None) -> dict[tuple[str, int], float]:
    """Per-(link, hour) factors mapping CDR flows to vehicle flows.

    Counted cells get ``counted / cdr_flow``.  Every other cell present in
    ``cdr_flows`` gets the flow-weighted mean factor of counted links in the
    same hour, or the global flow-weighted mean if that hour has no count.
    A counted cell with vehicles but no CDR flow cannot be calibrated: it
    raises :class:`CalibrationError`, or is appended to ``errors`` and given
    the fallback factor when a list is supplied.
    """
    counted: dict[tuple[str, int], float] = {}
    failed = []
    for c in counts:
        key = (c.link_id, c.time_bin)
        r = cdr_flows.get(key, 0.0)
        if r > 0:
            counted[key] = c.counted_vehicles / r
        elif c.counted_vehicles > 0:
            exc = CalibrationError(f"link {c.link_id} hour {c.time_bin}: "
                                   f"{c.counted_vehicles} vehicles counted but no CDR flow")
            if errors is None:
                raise exc
            errors.append(exc)
            failed.append(key)
    if not counted:
        raise CalibrationError("no counted link carries CDR flow; nothing to calibrate against")

    per_bin: dict[int, list] = defaultdict(list)
    for (lid, t), b in counted.items():
        per_bin[t].append((cdr_flows[(lid, t)], b))
    global_beta = _weighted_beta([p for t in sorted(per_bin) for p in per_bin[t]])
    bin_beta = {t: _weighted_beta(p) for t, p in per_bin.items()}

    betas = {}
    for key in sorted(set(cdr_flows) | set(failed)):
        if key in counted:
            betas[key] = counted[key]
        else:
            betas[key] = bin_beta.get(key[1], global_beta)
    return betas


def link_flows(cdr_flows: Mapping[tuple[str, int], float],
               betas: Mapping[tuple[str, int], float]) -> list[LinkFlow]:
    keys = sorted(set(cdr_flows) | set(betas))
    return [LinkFlow(l, t, float(cdr_flows.get((l, t), 0.0)), float(betas.get((l, t), 1.0)))
            for l, t in keys]


def vehicle_flows(flows: Iterable[LinkFlow]) -> dict[tuple[str, int], float]:
    return {(f.link_id, f.time_bin): f.vehicle_flow for f in flows}


# -- CSV I/O -----------------------------------------------------------------

def read_counts(source) -> list[TrafficCount]:
    fh = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        need = ("link_id", "time_bin", "vehicles_per_hour")
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}")
        return [TrafficCount(r["link_id"].strip(), int(r["time_bin"]), float(r["vehicles_per_hour"]))
                for r in reader]
    finally:
        if fh is not source:
            fh.close()


def write_counts(counts: Iterable[TrafficCount]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("link_id", "time_bin", "vehicles_per_hour"))
    for c in counts:
        w.writerow((c.link_id, c.time_bin, repr(float(c.counted_vehicles))))
    return buf.getvalue()


def write_flows(flows: Iterable[LinkFlow]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("link_id", "time_bin", "cdr_flow", "scale_factor", "vehicle_flow"))
    for f in flows:
        w.writerow((f.link_id, f.time_bin, repr(f.cdr_flow), repr(f.scale_factor), repr(f.vehicle_flow)))
    return buf.getvalue()


def read_flows(source) -> list[LinkFlow]:
    fh = _open_text(source)
    try:
        return [LinkFlow(r["link_id"], int(r["time_bin"]), float(r["cdr_flow"]), float(r["scale_factor"]))
                for r in csv.DictReader(fh)]
    finally:
        if fh is not source:
            fh.close()


def write_od(matrices: Iterable[OdMatrix]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("time_bin", "origin", "destination", "trips"))
    for m in matrices:
        for (o, d), n in m.entries.items():
            w.writerow((m.time_bin, o, d, n))
    return buf.getvalue()


def read_od(source) -> list[OdMatrix]:
    fh = _open_text(source)
    try:
        bins: dict[int, dict] = defaultdict(dict)
        for r in csv.DictReader(fh):
            bins[int(r["time_bin"])][(r["origin"], r["destination"])] = int(r["trips"])
    finally:
        if fh is not source:
            fh.close()
    return [OdMatrix(b, bins[b]) for b in sorted(bins)]
