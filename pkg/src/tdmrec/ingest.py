"""Parsing and indexing of call detail records (CDR) and tower geography.

CSV layouts::

    cdr.csv     user_id,start_time,end_time,tower_id,nationality,device_model
    towers.csv  tower_id,lat,lon,city,merged_group_id

Timestamps are either ISO-8601 or epoch seconds.  The format is detected
once per column from the first non-empty value and must be uniform within
a file.
"""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

from .errors import RowError, SchemaError, TooManyRowErrors, UnknownTowerError

CDR_COLUMNS = ("user_id", "start_time", "end_time", "tower_id", "nationality", "device_model")
CDR_REQUIRED = CDR_COLUMNS[:5]
TOWER_COLUMNS = ("tower_id", "lat", "lon", "city", "merged_group_id")

DEFAULT_GROUPS = ("FR", "ES")


@dataclass(frozen=True)
class CdrRecord:
    user_id: str
    start_time: float
    end_time: float
    tower_id: str
    nationality: str
    device_model: str = ""


@dataclass(frozen=True)
class Tower:
    tower_id: str
    latitude: float
    longitude: float
    city: str
    merged_group_id: str


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered visit events of one user.

    ``visits`` holds ``(tower_id, timestamp)`` pairs, consecutive records at
    the same tower already collapsed into a single visit.
    """

    user_id: str
    visits: tuple[tuple[str, float], ...]
    group: str
    nationality: str = ""

    def __len__(self):
        return len(self.visits)

    @property
    def towers(self) -> list[str]:
        return [t for t, _ in self.visits]


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    group: str
    visit_counts: dict[str, int]
    nationality: str


@dataclass
class ParseResult:
    """Records in file order plus the rows that were dropped.

    Behaves like the list of records for iteration, ``len`` and indexing.
    """

    records: list = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


# -- timestamps -------------------------------------------------------------

def _is_epoch(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_timestamp(text: str, epoch: bool) -> float:
    text = text.strip()
    if epoch:
        return float(text)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(t: float) -> str:
    """Canonical epoch-seconds text: integral values print without a fraction."""
    if float(t).is_integer():
        return str(int(t))
    return repr(float(t))


# -- CSV helpers ------------------------------------------------------------

def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _reader(source, required: Sequence[str]):
    fh = _open_text(source)
    reader = csv.DictReader(fh)
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    return fh, reader


def _check_error_budget(errors, total, threshold):
    if errors and len(errors) > threshold * total:
        raise TooManyRowErrors(errors, total)


def parse_cdr(source, max_error_fraction: float = 0.01) -> ParseResult:
    """Parse ``cdr.csv`` into :class:`CdrRecord` objects.

    Malformed rows (bad timestamps, ``end_time < start_time``, empty ids) are
    dropped and collected in ``result.errors`` with their 1-based file line.
    Raises :class:`TooManyRowErrors` once the dropped fraction exceeds
    ``max_error_fraction``.
    """
    fh, reader = _reader(source, CDR_REQUIRED)
    result = ParseResult()
    epoch = {}
    total = 0
    try:
        for row in reader:
            total += 1
            line = reader.line_num
            try:
                rec = _cdr_row(row, epoch, line)
            except RowError as exc:
                result.errors.append(exc)
                continue
            result.records.append(rec)
    finally:
        if fh is not source:
            fh.close()
    _check_error_budget(result.errors, total, max_error_fraction)
    return result


def _cdr_row(row, epoch, line):
    user = (row.get("user_id") or "").strip()
    tower = (row.get("tower_id") or "").strip()
    if not user or not tower:
        raise RowError(line, "empty user_id or tower_id")
    times = []
    for col in ("start_time", "end_time"):
        raw = (row.get(col) or "").strip()
        if not raw:
            raise RowError(line, f"empty {col}")
        if col not in epoch:
            epoch[col] = _is_epoch(raw)
        try:
            times.append(parse_timestamp(raw, epoch[col]))
        except ValueError:
            raise RowError(line, f"unparseable {col} {raw!r}") from None
    start, end = times
    if end < start:
        raise RowError(line, "end_time precedes start_time")
    return CdrRecord(
        user_id=user,
        start_time=start,
        end_time=end,
        tower_id=tower,
        nationality=(row.get("nationality") or "").strip(),
        device_model=(row.get("device_model") or "").strip(),
    )


def write_cdr(records: Iterable[CdrRecord], dest=None) -> str:
    """Serialise records back to ``cdr.csv`` with epoch-second timestamps."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CDR_COLUMNS)
    for r in records:
        w.writerow([r.user_id, format_timestamp(r.start_time), format_timestamp(r.end_time),
                    r.tower_id, r.nationality, r.device_model])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


def parse_towers(source) -> dict[str, Tower]:
    """Read ``towers.csv`` into a registry keyed by tower id.

    Unlike CDR rows, tower rows are reference data and any bad row is fatal.
    """
    fh, reader = _reader(source, TOWER_COLUMNS)
    towers = {}
    try:
        for row in reader:
            line = reader.line_num
            tid = (row["tower_id"] or "").strip()
            try:
                lat = float(row["lat"])
                lon = float(row["lon"])
            except (TypeError, ValueError):
                raise RowError(line, "unparseable coordinates") from None
            if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
                raise RowError(line, f"coordinates out of range ({lat}, {lon})")
            group = (row["merged_group_id"] or "").strip()
            if not tid or not group:
                raise RowError(line, "empty tower_id or merged_group_id")
            if tid in towers:
                raise RowError(line, f"duplicate tower_id {tid!r}")
            towers[tid] = Tower(tid, lat, lon, (row["city"] or "").strip(), group)
    finally:
        if fh is not source:
            fh.close()
    return towers


def write_towers(towers: Iterable[Tower], dest=None) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TOWER_COLUMNS)
    for t in towers:
        w.writerow([t.tower_id, repr(t.latitude), repr(t.longitude), t.city, t.merged_group_id])
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


# -- trajectories and profiles ---------------------------------------------

def group_of(nationality: str, groups: Sequence[str] = DEFAULT_GROUPS) -> str:
    return nationality if nationality in groups else "other"


def build_trajectories(records: Iterable[CdrRecord], towers: Mapping[str, Tower] | None = None,
                       errors: list | None = None,
                       groups: Sequence[str] = DEFAULT_GROUPS) -> list[Trajectory]:
    """Group records per user, sort by start time and collapse repeats.

    Records naming a tower absent from ``towers`` raise
    :class:`UnknownTowerError`, or are skipped and appended to ``errors``
    when a list is supplied.  Output is ordered by user id.
    """
    by_user: dict[str, list[CdrRecord]] = {}
    for rec in records:
        if towers is not None and rec.tower_id not in towers:
            exc = UnknownTowerError(f"user {rec.user_id!r}: unknown tower {rec.tower_id!r}")
            if errors is None:
                raise exc
            errors.append(exc)
            continue
        by_user.setdefault(rec.user_id, []).append(rec)

    out = []
    for user in sorted(by_user):
        recs = sorted(by_user[user], key=lambda r: (r.start_time, r.end_time, r.tower_id,
                                                        r.nationality, r.device_model))
        visits = []
        for r in recs:
            if visits and visits[-1][0] == r.tower_id:
                continue
            visits.append((r.tower_id, r.start_time))
        nat = recs[0].nationality
        out.append(Trajectory(user, tuple(visits), group_of(nat, groups), nat))
    return out


def build_profiles(trajectories: Iterable[Trajectory],
                   location_of: Mapping[str, str] | None = None) -> list[UserProfile]:
    """Count visit events per location for every trajectory.

    ``location_of`` optionally maps tower ids to a coarser location (merged
    tower group or network node); towers missing from it raise ``KeyError``.
    """
    profiles = []
    for traj in trajectories:
        locs = traj.towers if location_of is None else [location_of[t] for t in traj.towers]
        profiles.append(UserProfile(traj.user_id, traj.group, dict(Counter(locs)), traj.nationality))
    return profiles


def filter_tourists(profiles: Iterable[UserProfile], home_country: str,
                    min_towers: bool = False) -> list[UserProfile]:
    """Keep foreign users; with ``min_towers`` also drop single-location traces."""
    out = []
    for p in profiles:
        if p.nationality == home_country:
            continue
        if min_towers and len(p.visit_counts) <= 1:
            continue
        out.append(p)
    return out


def merged_mapping(towers: Mapping[str, Tower]) -> dict[str, str]:
    return {tid: t.merged_group_id for tid, t in towers.items()}


TRAJECTORY_COLUMNS = ("user_id", "group", "nationality", "seq", "tower_id", "timestamp")


def write_trajectories(trajectories: Iterable[Trajectory]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for traj in trajectories:
        for i, (tower, ts) in enumerate(traj.visits):
            w.writerow((traj.user_id, traj.group, traj.nationality, i, tower, format_timestamp(ts)))
    return buf.getvalue()


def read_trajectories(source) -> list[Trajectory]:
    fh, reader = _reader(source, TRAJECTORY_COLUMNS)
    rows: dict[str, list] = {}
    meta = {}
    try:
        for row in reader:
            uid = row["user_id"]
            meta[uid] = (row["group"], row["nationality"])
            rows.setdefault(uid, []).append((int(row["seq"]), row["tower_id"], float(row["timestamp"])))
    finally:
        if fh is not source:
            fh.close()
    out = []
    for uid in sorted(rows):
        visits = tuple((t, ts) for _, t, ts in sorted(rows[uid]))
        out.append(Trajectory(uid, visits, *meta[uid]))
    return out
